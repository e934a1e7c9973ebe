"""Sweep the bundled process across personas, policies, and seeds.

Equivalent to `gbt sweep bundled:box_folding --personas bundled:box_folding
--policies responsive,silent,faulty --seeds 0:10`, then folds the rows into
a per-persona completion table.
"""
from collections import defaultdict

from gradedbt import load_bundled
from gradedbt.sim import HumanPolicy, stats_csv, sweep


def main():
    spec, personas = load_bundled("box_folding")
    policies = [HumanPolicy.responsive(),
                HumanPolicy.silent(),
                HumanPolicy.faulty(0.3, latency_ms=500)]
    rows = sweep(spec, personas, policies, seeds=range(10))
    print(stats_csv(rows), end="")

    done = defaultdict(lambda: defaultdict(int))
    total = defaultdict(lambda: defaultdict(int))
    for row in rows:
        total[row.persona_id][row.policy] += 1
        if row.stats.outcome == "completed":
            done[row.persona_id][row.policy] += 1

    names = {p.id: p.name for p in personas}
    print("\ncompletions per persona (of 10 seeds each)")
    header = "persona".ljust(12) + "".join(p.label.rjust(12) for p in policies)
    print(header)
    for pid in sorted(names):
        cells = "".join(
            f"{done[pid][p.label]}/{total[pid][p.label]}".rjust(12) for p in policies)
        print(f"{pid} {names[pid]:10s}{cells}")


if __name__ == "__main__":
    main()
