"""A large ball joined to a ball of radius l^-4: the Neumann energy bound
runs off to -infinity linearly in l even though the bulk term settles."""
from bclab.harness import counterexample_run

r = counterexample_run([16, 32, 64, 80, 96, 128], rho=1.0)
print(f"{'l':>6}{'bulk term':>14}{'small ball':>14}{'total':>14}")
for row in r["rows"]:
    print(f"{row['l']:6.0f}{row['term1']:14.6f}{row['term2']:14.6f}{row['total']:14.6f}")
print(f"\nslope of the small-ball term {r['slope']:.6f} (expected {r['expected_slope']:.6f})")
print(f"bulk term -> {r['term1_limit']:.4f}; infinite-volume Fermi value {r['term1_reference']:.4f}")
