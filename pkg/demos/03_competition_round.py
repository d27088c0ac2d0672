"""One competition round at the service level: submit, verdicts, repairs,
points, leaderboard, and the audit trail.

Everything here goes through the same code path the HTTP server uses, so the
printed verdict fields are exactly what a team sees in its receipt.
"""

import json

from bountyboard.bundles import ModelBundle, serialize_bundle
from bountyboard.competition import GLOBAL, CompetitionConfig, replay_transcript
from bountyboard.hypotheses import fit_tree
from bountyboard.predicates import parse_text
from bountyboard.service import CompetitionService
from bountyboard.synth import generate_task
from bountyboard.tabular import split

import importlib

fixture = importlib.import_module("make_demo_fixture")

task = fixture.demo_task()
source = generate_task(task)
config = CompetitionConfig(alpha=2_000_000.0, schema=task.schema(), seed=20240301,
                           daily_submission_limit=25)
service = CompetitionService.create(config, source)
team, token = service.add_team("demo-team")
print(f"registered {team}; credential delivered once: {token[:6]}…")

train = service.state.splits.train
group = parse_text('SECTOR == "tech"')
rows = group.evaluate(train).nonzero()[0]
bundle = ModelBundle(group, fit_tree(train.take(rows), max_depth=2, min_leaf=10))

receipt = service.submit(token, serialize_bundle(bundle))
print(f"submission {receipt.id} status={receipt.status}")
service.process_pending()

verdict = receipt.verdict_global
m = verdict["measured"]
print(f"global verdict: {verdict['decision']}")
print(f"  w={m['weight']:.4f}  L(f,g)={m['loss_current']:,.0f}  "
      f"L(h,g)={m['loss_candidate']:,.0f}")
print(f"  w*delta={m['weighted_improvement']:,.0f}  (alpha={config.alpha:,.0f})")
print(f"  overall: {m['overall_before']:,.0f} -> {m['overall_after']:,.0f}")
print(f"  points awarded: {verdict['points_awarded']:,.0f}")
print(f"  repairs triggered: {len(verdict['repairs_triggered'])}")

print("\nleaderboard:")
for entry in service.leaderboard():
    print(f"  {entry['display_name']:<14} val={entry['validation_loss']:>14,.0f} "
          f"updates={entry['accepted_updates']} points={entry['points']:,.0f}")

print("\nevent feed:")
for event in service.events_since(0):
    print(f"  #{event['seq']} {event['kind']} {json.dumps(event['payload'])[:70]}")

# The transcript replays to the identical state hash: the audit story.
transcript = service.export_transcript()
replayed = replay_transcript(transcript, source)
assert replayed.state_hash() == transcript["final_state_hash"]
print(f"\ntranscript verified; state hash {transcript['final_state_hash'][:16]}…")
service.close()
