"""Datasets, group predicates, and the loss accounting behind acceptance.

Walks through the pieces a submission is judged with: schema-typed data,
boolean group predicates, group weight/loss, and the decomposition identity
that makes the acceptance threshold equal an overall-MSE drop.
"""

import numpy as np

from bountyboard.predicates import eval_predicate, parse_text
from bountyboard.synth import (
    CategoricalFeatureSpec,
    NumericFeatureSpec,
    Regime,
    TaskSpec,
    generate_task,
)
from bountyboard.tabular import group_loss, group_weight, mse, split

# A small synthetic income task: sector keys the pay structure.
task = TaskSpec(
    seed=11,
    n_rows=5000,
    numeric=(NumericFeatureSpec("HOURS", 5, 60), NumericFeatureSpec("AGE", 18, 75)),
    categorical=(CategoricalFeatureSpec("SECTOR", ("ag", "svc", "tech")),),
    regime_feature="SECTOR",
    regimes=(
        ("ag", Regime(8000, (("HOURS", 300.0),))),
        ("svc", Regime(12000, (("HOURS", 420.0),))),
        ("tech", Regime(21000, (("HOURS", 900.0),))),
    ),
    noise_sigma=2000.0,
)
data = generate_task(task)
parts = split(data, (0.7, 0.15, 0.15), seed=3)
print(f"rows: train={parts.train.n_rows} val={parts.validation.n_rows} "
      f"test={parts.test.n_rows}")

# A global model that ignores sector structure: predict the train mean.
mean = float(parts.train.labels.mean())
val = parts.validation
preds = np.full(val.n_rows, mean)
print(f"constant model overall validation MSE: {mse(preds, val.labels):,.0f}")

# Group predicates are parsed from a tiny infix language.
group = parse_text('SECTOR == "tech" AND HOURS >= 30.0')
mask = eval_predicate(group, val)
w = group_weight(mask)
loss_on_group = group_loss(preds, val.labels, mask)
loss_off_group = group_loss(preds, val.labels, ~mask)
print(f"group weight w = {w:.3f}")
print(f"group loss   L(f,g)      = {loss_on_group:,.0f}")
print(f"off-group    L(f,not g)  = {loss_off_group:,.0f}")

# Decomposition identity: overall = w * on-group + (1-w) * off-group.
lhs = mse(preds, val.labels)
rhs = w * loss_on_group + (1 - w) * loss_off_group
print(f"decomposition check: {lhs:,.4f} == {rhs:,.4f} "
      f"(diff {abs(lhs - rhs):.2e})")

# So if a challenger h improves the group by delta = L(f,g) - L(h,g),
# prepending (g, h) drops the overall MSE by exactly w * delta. That is the
# quantity the acceptance rule compares against alpha.
perfect_group_preds = preds.copy()
perfect_group_preds[mask] = val.labels[mask]
drop = lhs - mse(perfect_group_preds, val.labels)
print(f"best possible w*delta for this group: {drop:,.0f}")
