"""Error and bound curves for three well separated target eigenvalues.

Runs the Example 1 experiment at a reduced size and prints, for each Ritz
index, the mean error next to the B1/B2/B3 curves and the Chebyshev-filtered
error at a few inner steps.  Writes ``example1.csv`` and ``example1.gp``.

    python3 demos/example1_curves.py [--size 900] [--trials 100]
"""
import argparse

from ritzbounds import lab

ap = argparse.ArgumentParser()
ap.add_argument("--size", type=int, default=300)
ap.add_argument("--trials", type=int, default=40)
args = ap.parse_args()

cfg = lab.ExperimentConfig(spectrum="example1", n=args.size, p=3, k=15, m=1,
                           trials=args.trials, mode="chebyshev-compare")
res = lab.run_experiment(cfg)

for j, i in enumerate(res.ritz_indices):
    print(f"i={i}")
    print("  step   mean err      B1         B2         B3         Chebyshev")
    for e in (0, 4, 9, 14):
        row = [res.mean_error[e, j]] + [res.bound_mean[b][e, j] for b in ("B1", "B2", "B3")]
        row.append(res.chebyshev_mean_error[e, j])
        print(f"  {e + 1:4d}  " + " ".join(f"{v:10.3e}" for v in row))

lab.emit_csv(res, "example1.csv")
lab.emit_plot_script(res, "example1.gp", csv_path="example1.csv")
print("wrote example1.csv, example1.gp (gnuplot example1.gp)")
