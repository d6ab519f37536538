"""Clustered targets: why skipping eigenvalues inside a cluster helps.

Example 2 has three clusters of three eigenvalues.  With block size 9 the
B1 bound (which may skip the cluster partners of lambda_i) is compared to
the consecutive B2 bound for the middle member of each cluster.

    python3 demos/example2_clusters.py
"""
from ritzbounds import lab

cfg = lab.ExperimentConfig(spectrum="example2", n=600, p=9, k=15, m=1,
                           ritz_indices=[2, 5, 8], trials=20, bounds=["B1", "B2"])
res = lab.run_experiment(cfg)
last = len(res.inner) - 1
print("index  mean err    B1          B2          B2/B1")
for j, i in enumerate(res.ritz_indices):
    b1, b2 = res.bound_mean["B1"][last, j], res.bound_mean["B2"][last, j]
    print(f"{i:5d}  {res.mean_error[last, j]:10.3e}  {b1:10.3e}  {b2:10.3e}  {b2 / b1:10.3e}")
