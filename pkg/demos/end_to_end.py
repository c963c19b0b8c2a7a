"""The whole fabric against a direct-delivery baseline.

Runs the entity-swarm scenario twice with identical seeds and task
streams: once with every fabric layer disabled (messages go straight to
the routed agent) and once with the full intercept path. The swarm's
resolver only succeeds reliably when the component name for each incident
reaches it, which is exactly what memory injection provides.
"""

from cogfabric import ScenarioConfig, compare

baseline = ScenarioConfig.from_mapping(
    {"name": "entity-swarm", "episodes": 500, "fabric": {"enabled": False}}
)
candidate = ScenarioConfig.from_mapping({"name": "entity-swarm", "episodes": 500})

result = compare(baseline, candidate)

for label, report in (("baseline", result.baseline), ("fabric", result.candidate)):
    print(f"{label}:")
    print(f"  success rate        {report.success_rate:.3f}")
    print(f"  messages            {report.messages_total}")
    print(f"  msgs per completed  {report.messages_per_completed:.2f}")
    print(f"  mean latency        {report.latency_mean:.2f}")

print("deltas (fabric minus baseline):")
for key, value in sorted(result.deltas.items()):
    print(f"  {key:<22} {value:+.3f}")

print("\nsame comparison, via the console script (the packaged baseline file")
print("is the same scenario with `fabric.enabled: false`):")
import cogfabric  # noqa: E402  (only needed to locate the packaged file)
from pathlib import Path  # noqa: E402

baseline_yaml = Path(cogfabric.__file__).parent / "scenarios" / "entity_swarm_baseline.yaml"
print(f"  cogfabric compare {baseline_yaml} entity-swarm --episodes 500")
