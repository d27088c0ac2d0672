"""The reference scenario end to end: six scripted teams, twelve rounds.

Prints the claims summary (the structural properties the platform
guarantees), the final report table, and the acceptance-threshold sweep.
Fully deterministic; takes a few seconds.
"""

from bountyboard.harness import alpha_sweep, claims_text, run_competition, southern_toy

scenario = southern_toy()
result = run_competition(scenario)

print(claims_text(result.claims))
print()
print(result.report.to_text())
print()

print("acceptance-threshold sweep (same scenario seeds):")
print(f"{'scale':>6} {'alpha':>14} {'global accepted':>16} {'local accepted':>15}")
for row in alpha_sweep(scenario):
    print(f"{row['alpha_scale']:>6} {row['alpha']:>14,.0f} "
          f"{row['global_accepted']:>16} {row['local_accepted']:>15}")

result.service.close()
