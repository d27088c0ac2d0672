"""The pointer decision list: prepend-only updates plus repair back-edges.

Builds the canonical situation by hand: a group-specific fix, then a
whole-dataset update that is better overall but worse on the earlier group,
then the repair node that routes the group back to its best frozen version.
"""

import numpy as np

from bountyboard.hypotheses import Constant
from bountyboard.pdl import PointerDecisionList
from bountyboard.predicates import Compare, TruePred, parse_text
from bountyboard.tabular import Dataset, Feature, Schema, group_loss, mse

schema = Schema(
    features=(Feature("AGE", "numeric"),),
    label_name="INCOME",
    label_range=(0.0, 100000.0),
)

# Ten percent of people are young and earn 10k; the rest earn 50k.
ages = [22.0] * 10 + [55.0] * 90
data = Dataset.from_values(schema, {"AGE": ages},
                           [10000.0] * 10 + [50000.0] * 90)
young = Compare("AGE", "<", 30.0)
young_mask = young.evaluate(data)

pdl = PointerDecisionList(Constant(30000.0), schema)
print(f"version 0 overall MSE: {mse(pdl.predict(data), data.labels):,.0f}")

# Version 1: someone fixes the young group exactly.
pdl.prepend_update(young, Constant(10000.0))
print(f"version 1 overall MSE: {mse(pdl.predict(data), data.labels):,.0f} "
      f"(young loss {group_loss(pdl.predict(data), data.labels, young_mask):,.0f})")

# Version 2: a whole-dataset replacement that nails the majority but
# clobbers the young group. Better overall, worse on the group.
pdl.prepend_update(TruePred(), Constant(50000.0))
v2 = pdl.predict(data)
print(f"version 2 overall MSE: {mse(v2, data.labels):,.0f} "
      f"(young loss {group_loss(v2, data.labels, young_mask):,.0f})")

# Version 3: the repair. Young rows route back into frozen version 1;
# everything else still sees version 2. This is the gray node in the
# ensembling diagram: a pointer, not a copy.
pdl.prepend_repair(young, target_version=1)
v3 = pdl.predict(data)
print(f"version 3 overall MSE: {mse(v3, data.labels):,.0f} "
      f"(young loss {group_loss(v3, data.labels, young_mask):,.0f})")

# Old versions never change: the structure is append-only and versioned.
assert np.array_equal(pdl.predict(data, 2), v2)
print("version 2 predictions unchanged after the repair was prepended")

# The whole structure serializes to a replayable snapshot.
snapshot = pdl.to_json_obj()
again = PointerDecisionList.from_json_obj(snapshot, schema)
assert np.array_equal(again.predict(data), v3)
print(f"snapshot round-trip OK: {len(snapshot['nodes'])} nodes, "
      f"version {snapshot['version']}")
for node in snapshot["nodes"]:
    arrow = f" -> v{node['target_version']}" if node["kind"] == "repair" else ""
    print(f"  v{node['version']}: {node['kind']} on [{node['group']}]{arrow}")
