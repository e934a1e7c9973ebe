"""Watch the same process adapt to different personas.

Runs the bundled box-folding process for each persona twice, once with a
cooperative operator and once with a silent one, and prints which strategy
each stage ended up using. Silent runs show the fall-through ladder; the
first stage has no fully automated fallback, so silence eventually fails
there.
"""
from gradedbt import load_bundled
from gradedbt.compiler import compile_tree
from gradedbt.sim import HumanPolicy, simulate_tree


def describe(trace, spec):
    if trace.outcome == "completed":
        story = ", ".join(
            f"{part.id}->{trace.strategies_used[part.id][0]} (L{trace.strategies_used[part.id][1]})"
            for part in spec.part_processes)
        return f"completed: {story}"
    return f"failed at {trace.failed_part}"


def main():
    spec, personas = load_bundled("box_folding")
    tree = compile_tree(spec, personas)
    for policy_name, policy in [("responsive", HumanPolicy.responsive()),
                                ("silent", HumanPolicy.silent())]:
        print(f"== {policy_name} operator ==")
        for persona in personas:
            trace = simulate_tree(tree, personas, persona.id, policy)
            print(f"  {persona.id} {persona.name:8s} {describe(trace, spec)}")
        print()


if __name__ == "__main__":
    main()
