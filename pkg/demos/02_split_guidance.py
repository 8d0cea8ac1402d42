"""Split classifier-free guidance on a denoiser you can read by eye.

The stub below returns a different constant for each set of active
conditioning inputs, so every guided output can be checked by hand.

Run:  python demos/02_split_guidance.py
"""

from vton_lab.data import INPUT_NAMES
from vton_lab.guidance import CUSTOM_WEIGHTS, UBC_WEIGHTS, GuidanceSchedule, make_tryon_schedule, split_cfg

ALL = frozenset(INPUT_NAMES)
schedule = make_tryon_schedule(*UBC_WEIGHTS)

# Groups are cumulative: each term switches on one more group of inputs.
for i, active in enumerate(schedule.active_sets()):
    print(f"term {i}: active = {sorted(active) or ['(none)']}")

table = dict(zip(schedule.active_sets(), [0.0, 1.0, 2.0, 3.0]))
calls = []


def stub(z, t, cond, nulls):
    calls.append(ALL - nulls)
    return table[ALL - nulls]


out = split_cfg(stub, None, 0, None, schedule)
print(f"\nweights {UBC_WEIGHTS}: guided prediction = {out} after {len(calls)} calls")
print("by hand: 1*0 + 1*(1-0) + 3*(2-1) + 1*(3-2) = 5")

out = split_cfg(stub, None, 0, None, make_tryon_schedule(*CUSTOM_WEIGHTS))
print(f"weights {CUSTOM_WEIGHTS}: the sum telescopes to the fully conditional value {out}")

# One group reduces to ordinary classifier-free guidance.
single = GuidanceSchedule((frozenset({"agnostic"}),), (1.0, 4.0))
e_null, e_cond = 0.25, 1.0
got = split_cfg(lambda z, t, c, nulls: e_cond if "agnostic" not in nulls else e_null, None, 0, None, single)
print(f"\nsingle group, w=4: {got} == {e_null} + 4*({e_cond} - {e_null}) = {e_null + 4 * (e_cond - e_null)}")

# The literal recursion scales the first delta differently when w_null != 1.
odd = make_tryon_schedule(2.0, 1.0, 1.0, 1.0)
table = dict(zip(schedule.active_sets(), [2.0, 3.0, 5.0, 7.0]))
strict = split_cfg(stub, None, 0, None, odd)
intuitive = split_cfg(stub, None, 0, None, odd, strict=False)
print(f"\nw_null=2 with predictions (2, 3, 5, 7): strict {strict}, intuitive {intuitive}")
