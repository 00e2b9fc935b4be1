"""Manufactured-solution convergence with every face held rigid.

With zero interface compliance the method reduces to symmetric interior
penalty, so P1 elements should converge at second order in L2 and first
order in the energy norm.

    python3 demos/convergence.py
"""

from czdg.verification import convergence_study

r = convergence_study(levels=(4, 8, 16, 32))
print(f"{'h':>8} {'L2 error':>12} {'energy error':>14}")
for h, a, b in zip(r["h"], r["l2"], r["energy"]):
    print(f"{h:8.4f} {a:12.4e} {b:14.4e}")
print("L2 rates     ", " ".join(f"{x:.3f}" for x in r["l2_rates"]))
print("energy rates ", " ".join(f"{x:.3f}" for x in r["energy_rates"]))
