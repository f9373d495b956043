"""Prompt templates for the thinker, observer and final-answer roles."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

from ..errors import ConfigurationError, TemplateError

PLACEHOLDERS = frozenset({"question", "img-url", "cands", "quadrant", "direction", "position"})
_PH = re.compile(r"\{([a-z][a-z-]*)\}")

ROLES = ("thinker", "observer", "final-answer")


@dataclass(frozen=True)
class PromptTemplate:
    role: str
    task: str
    template_text: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigurationError(f"unknown template role {self.role!r}")
        unknown = set(self.placeholders()) - PLACEHOLDERS
        if unknown:
            raise ConfigurationError(f"undeclared placeholders {sorted(unknown)}")

    def placeholders(self):
        seen = []
        for m in _PH.finditer(self.template_text):
            if m.group(1) not in seen:
                seen.append(m.group(1))
        return seen


def render_prompt(template: PromptTemplate, bindings: Mapping[str, object]) -> str:
    """Substitute placeholders; a list binding feeds successive occurrences in order."""
    for name in template.placeholders():
        if name not in bindings:
            raise TemplateError(name)
    counters = {}

    def sub(m):
        name = m.group(1)
        value = bindings[name]
        if isinstance(value, (list, tuple)):
            i = counters.get(name, 0)
            counters[name] = i + 1
            if i >= len(value):
                raise TemplateError(name)
            return str(value[i])
        return str(value)

    return _PH.sub(sub, template.template_text)


_SEARCH_THINKER = """\
You are a visual assistant looking for an answer to Question: {question}

Focus your attention specifically on the {quadrant} quadrant of the Image {img-url}.

Does this specific region contain the object or visual clues needed to answer the question?
Answer Yes or No."""

_SEARCH_OBSERVER = """\
Question: {question}

Look at the current image view {img-url}.

Does this image contain sufficient and clear visual evidence to answer the question correctly?
Please answer Yes or No."""

_SEARCH_FINAL = """\
You are an intelligent visual question answering agent. Question: {question}
You have collected the following visual evidence paths: {img-url}
Carefully analyze the evidence and answer the question. If it is a multiple-choice question, output the option letter."""

_NAV_THINKER = """\
There is the map image {img-url}. You are in the position of {position}. Considering moving {direction} to the next position.

Task:

Analyze if the Proposed Action is valid and logical.

- Is the direction BLOCKED by a wall immediately?

- Does it move drastically away from the goal?

Question: Is moving {direction} a valid and reasonable step to take right now?
Please answer Yes or No."""

_NAV_OBSERVER = """\
Action Execution Assessment:

Action Taken:

-{direction}

Images:

- Full Map (After Move): {img-url}

- Regional View (Target Cell): {img-url}

Task:

Verify the safety of the New Position. Look at the regional view.
This shows the context of the target location.

- Is it a bad path (Black or Obstacle Area)?

- Or is it a safe or right path (White/Light Area)?

Question: Is the target position clearly a safe and correct road?
Please answer Yes or No"""

_JIGSAW_THINKER = """\
Current Image:

- {img-url}.

You are an assistant to recover the correct order based on the current image. Please output at least {cands} candidate set of the right permutation, and do you think it contains high confidence, output Yes or No.

Output Format:
{
    "candidates": [
        { "permutation": [[1,2,3], ...], "High Confidence": "Yes/No" }
    ]
}"""

_JIGSAW_OBSERVER = """\
Given the original image {img-url} and the rearranged image {img-url}

Do you think the arrangement process recovers the correct order based on the original image?

Please answer Yes or No."""

_SUDOKU_THINKER = """\
Current Image:

-{img-url}

Task:

- Fill in the remaining positions with numbers (1-9) according to the rules of Sudoku, and correspond them with their row and column numbers in the image, while also providing the reasoning.

- Make sure there are no duplicate digits in each Column.

- Make sure there are no duplicate digits in each Row.

- Make sure there are no duplicate digits in each bold 3*3 Box.

Please provide at least {cands} candidates and your confidence with Yes or No.

{
    "candidates": [
        {
          "coordinates": [[1,1],...],
          "value": [5,...],
          "High Confidence": "Yes/No"
        },
        ...
    ]
}"""

_SUDOKU_OBSERVER = """\
You are a Sudoku Validator.

Updated Sudoku map:

- {img-url}

Task:

- Verify the validity of the filled numbers (masked as blue) recently in the updated Sudoku Map:

Checklist for each number:

- Is it unique in each Row?

- Is it unique in each Column?

- Is it unique in each bold 3x3 Box?

Please answer Yes or No"""

_NAV_TASKS = ("frozen-lake", "maze", "visuothink")

TEMPLATES = {}
for _task in _NAV_TASKS:
    TEMPLATES[("thinker", _task)] = PromptTemplate("thinker", _task, _NAV_THINKER)
    TEMPLATES[("observer", _task)] = PromptTemplate("observer", _task, _NAV_OBSERVER)
TEMPLATES[("thinker", "visual-search")] = PromptTemplate("thinker", "visual-search", _SEARCH_THINKER)
TEMPLATES[("observer", "visual-search")] = PromptTemplate("observer", "visual-search", _SEARCH_OBSERVER)
TEMPLATES[("final-answer", "visual-search")] = PromptTemplate("final-answer", "visual-search", _SEARCH_FINAL)
TEMPLATES[("thinker", "jigsaw")] = PromptTemplate("thinker", "jigsaw", _JIGSAW_THINKER)
TEMPLATES[("observer", "jigsaw")] = PromptTemplate("observer", "jigsaw", _JIGSAW_OBSERVER)
TEMPLATES[("thinker", "sudoku")] = PromptTemplate("thinker", "sudoku", _SUDOKU_THINKER)
TEMPLATES[("observer", "sudoku")] = PromptTemplate("observer", "sudoku", _SUDOKU_OBSERVER)


def get_template(role: str, task: str) -> PromptTemplate:
    try:
        return TEMPLATES[(role, task)]
    except KeyError:
        raise ConfigurationError(f"no {role} template for task {task!r}") from None
