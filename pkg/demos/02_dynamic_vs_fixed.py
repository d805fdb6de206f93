"""Fixed-width vs dynamic bit allocation on one synchronous training run.

Runs the same noisy quadratic problem under several schedules and prints the
loss/communication trade-off table, then shows the dynamic schedule's width
trajectory: few bits while gradients are informative-per-bit, more as the
iterate approaches the optimum and the recency weight grows.

Run:  python demos/02_dynamic_vs_fixed.py
"""

from dqsim import ObjectiveSpec, OracleSpec, RunConfig, ScheduleSpec, run
from dqsim.cli import emit_summary

base = dict(
    objective=ObjectiveSpec(kind="quadratic-isotropic", d=16, lam=1.0),
    oracle=OracleSpec(kind="gaussian", sigma=0.5),
    W=4,
    T=200,
    eta=0.1,
    seed=7,
    x0="ones",
)

schedules = {
    "sign": ScheduleSpec(kind="sign"),
    "ternary": ScheduleSpec(kind="ternary"),
    "fixed-4": ScheduleSpec(kind="fixed", bits=4),
    "fixed-8": ScheduleSpec(kind="fixed", bits=8),
    "fixed-32": ScheduleSpec(kind="fixed", bits=32),
    "dynamic": ScheduleSpec(kind="dynamic", epsilon=0.02, gamma=0.5, tau=20, b0=6),
}

traces = {}
for label, sched in schedules.items():
    traces[label] = run(RunConfig(schedule=sched, **base))

print("=== loss vs communication (identical seeds and noise) ===")
print(emit_summary(list(traces.values()), list(schedules)))

dyn = traces["dynamic"]
print("=== dynamic width trajectory (held between refreshes) ===")
marks = [0, 20, 40, 60, 80, 100, 120, 140, 160, 180, 199]
print("  t:    " + "  ".join(f"{t:4d}" for t in marks))
print("  bits: " + "  ".join(f"{dyn.bits[t]:4d}" for t in marks))
print("  gbar: " + "  ".join(f"{dyn.gbar[t]:4.2f}" for t in marks))

print()
print(f"dynamic total bits:  {dyn.total_bits}")
print(f"fixed-8 total bits:  {traces['fixed-8'].total_bits}")
print(f"final losses:        dynamic {dyn.final_loss:.5f}  "
      f"fixed-8 {traces['fixed-8'].final_loss:.5f}")
