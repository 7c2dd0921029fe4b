"""
How much privacy does a training schedule spend?
================================================

Squared sensitivity (zeta) of the tree under different participation
patterns, then the (epsilon, delta) guarantee it implies.
"""

from dpftrl.privacy import (
    VIRTUAL, epsilon_for, rdp_to_dp, RdpCurve, compose_rdp, sensitivity_dp,
    sensitivity_given_order, sensitivity_level_wise, single_tree_zeta,
)

# A known order: record 1 is used at steps 1 and 4
report = sensitivity_given_order([1, 2, 3, 1, 4])
print("order [1,2,3,1,4]:", report.per_identifier, "zeta =", report.zeta)

# Completing the tree with virtual steps adds upper nodes, so zeta grows
padded = sensitivity_given_order([1, 2, 3, 1, 4, VIRTUAL, VIRTUAL, VIRTUAL])
print("padded to 8 leaves:", padded.per_identifier)

# Unknown order, only a minimum gap xi between participations
T, E, xi = 64, 4, 15
print(f"T={T} E={E} xi={xi}: level-wise {sensitivity_level_wise(T, E, xi).zeta},"
      f" exact {sensitivity_dp(T, E, xi).zeta}")

# Restarting the tree every epoch instead
n, sigma, delta = 16, 4.0, 1e-5
print("restarts:", single_tree_zeta(n, E), "single tree:", sensitivity_dp(n * E, E, n - 1).zeta)

# Converting to (eps, delta)
for s in (1.0, 2.0, 5.0, 10.0):
    print(f"sigma={s:5.1f}  eps={epsilon_for(single_tree_zeta(10_000), s, delta):.3f}")

# Separate mechanisms compose by adding RDP curves
both = compose_rdp([RdpCurve.gaussian(10, 5.0), RdpCurve.gaussian(6, 5.0)])
print("composed:", rdp_to_dp(both, delta))
