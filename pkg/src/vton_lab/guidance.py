"""Split classifier-free guidance over cumulative conditioning groups.

A denoiser here is any callable ``denoiser(z_t, t, cond, nulls)`` where
``nulls`` is the frozenset of conditioning inputs to replace with their
null embeddings. Guidance works in whatever space the denoiser predicts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .data import INPUT_NAMES
from .errors import InvalidArgument

AGNOSTIC_GROUP = frozenset({"agnostic"})
GARMENT_GROUP = frozenset({"garment", "garment_pose"})
PERSON_POSE_GROUP = frozenset({"person_pose"})
TRYON_GROUPS = (AGNOSTIC_GROUP, GARMENT_GROUP, PERSON_POSE_GROUP)

CUSTOM_WEIGHTS = (1.0, 1.0, 1.0, 1.0)
UBC_WEIGHTS = (1.0, 1.0, 3.0, 1.0)


@dataclass(frozen=True)
class GuidanceSchedule:
    """Ordered groups and weights (w_null, w_1, ..., w_n)."""

    groups: tuple[frozenset, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(frozenset(g) for g in self.groups))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.weights) != len(self.groups) + 1:
            raise InvalidArgument(
                f"need {len(self.groups) + 1} weights for {len(self.groups)} groups, got {len(self.weights)}"
            )
        if not all(math.isfinite(w) for w in self.weights):
            raise InvalidArgument("guidance weights must be finite")

    def active_sets(self) -> list[frozenset]:
        """Cumulative active inputs: [{}, g1, g1|g2, ...]."""
        sets, cur = [frozenset()], frozenset()
        for g in self.groups:
            cur = cur | g
            sets.append(cur)
        return sets

    def to_dict(self) -> dict:
        return {"groups": [sorted(g) for g in self.groups], "weights": list(self.weights)}

    @classmethod
    def from_dict(cls, d: dict) -> "GuidanceSchedule":
        return cls(tuple(frozenset(g) for g in d["groups"]), tuple(d["weights"]))


def make_tryon_schedule(w_null: float, w_p: float, w_g: float, w_full: float) -> GuidanceSchedule:
    """Agnostic frames, then garment inputs, then person poses."""
    return GuidanceSchedule(TRYON_GROUPS, (w_null, w_p, w_g, w_full))


def parse_weights(text: str) -> tuple[float, ...]:
    try:
        weights = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise InvalidArgument(f"cannot parse guidance weights {text!r}") from None
    if len(weights) != 4:
        raise InvalidArgument(f"expected 4 comma-separated weights, got {text!r}")
    return weights


def split_cfg(denoiser, z_t, t, cond, sched: GuidanceSchedule, strict: bool = True):
    """Guided prediction with exactly len(groups) + 1 denoiser calls.

    With ``strict`` the running reference starts at w_null * eps(null);
    otherwise it starts at eps(null). The two agree whenever w_null == 1.
    """
    all_inputs = frozenset(INPUT_NAMES).union(*sched.groups)
    eps_null = denoiser(z_t, t, cond, all_inputs)
    guided = sched.weights[0] * eps_null
    prev = guided if strict else eps_null
    active = frozenset()
    for w, group in zip(sched.weights[1:], sched.groups):
        active = active | group
        eps_i = denoiser(z_t, t, cond, all_inputs - active)
        guided = guided + w * (eps_i - prev)
        prev = eps_i
    return guided
