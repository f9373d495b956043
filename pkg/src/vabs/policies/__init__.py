"""Scoring backends for the thinker and observer roles."""

from .base import PolicyBackend, derived_rng
from .prompts import TEMPLATES, PromptTemplate, get_template, render_prompt
from .remote import (
    Journal,
    RemotePolicy,
    RemoteEndpointConfig,
    build_request,
    parse_proposals,
    remote_score,
)
from .synthetic import (
    SyntheticOracleConfig,
    SyntheticPolicy,
    UniformPolicy,
    synthetic_score_observer,
    synthetic_score_prior,
)


def propose_open_actions(policy: PolicyBackend, instance, state, n_cands: int, stream=()):
    """Candidate proposals for open action spaces, filtered to structurally valid ones."""
    from ..errors import ProposalParseError

    out = []
    for action in policy.propose(instance, state, n_cands, tuple(stream)):
        try:
            instance.validate_action(state, action)
        except Exception:
            continue
        out.append(action)
    if not out:
        raise ProposalParseError("no structurally valid proposals survived")
    return out


__all__ = [
    "PolicyBackend", "derived_rng", "TEMPLATES", "PromptTemplate", "get_template", "render_prompt",
    "Journal", "RemotePolicy", "RemoteEndpointConfig", "build_request", "parse_proposals", "remote_score",
    "SyntheticOracleConfig", "SyntheticPolicy", "UniformPolicy",
    "synthetic_score_observer", "synthetic_score_prior", "propose_open_actions",
]
