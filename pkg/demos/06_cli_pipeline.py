# %% [markdown]
# # The command-line pipeline
#
# The same steps through ``roadsfm``: synthesise the bundled two-frame
# scene, estimate with and without the homography loss, evaluate the road
# homography against ground-truth correspondences and collect a report.
# Each step leaves a ``run.json`` that can be fed back through ``--config``.

# %%
import json
from pathlib import Path

from roadsfm.cli import main as roadsfm

out = Path(__file__).with_name("out") / "cli"
roadsfm(["synth", "pair", "--out", str(out / "data")])
for xi in ("0.1", "0"):
    roadsfm(["estimate", str(out / "data"), "--xi", xi, "--out", str(out / f"est_xi{xi}")])
    roadsfm(["eval", "homography", str(out / f"est_xi{xi}"), str(out / "data"),
             "--out", str(out / f"eval_xi{xi}")])
    roadsfm(["eval", "normal", str(out / f"est_xi{xi}"), str(out / "data"),
             "--out", str(out / f"eval_xi{xi}")])
roadsfm(["fit", "plane", str(out / "data"), "--out", str(out / "fit")])
roadsfm(["report", str(out / "eval_xi0.1"), str(out / "eval_xi0"), "--out", str(out / "report")])

# %%
for xi in ("0.1", "0"):
    m = json.loads((out / f"eval_xi{xi}" / "homography.json").read_text())["metrics"]
    print(f"xi={xi}: mean road reprojection error {m['mean']['value']:.3f} px")
print((out / "report" / "report.md").read_text()[:400])
