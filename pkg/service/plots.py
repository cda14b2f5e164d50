"""
Plot-script emission. Each experiment directory gets a small matplotlib script
that renders its tables; nothing here imports matplotlib.
"""
import logging
from pathlib import Path
from string import Template
from typing import Dict, List

logger = logging.getLogger(__name__)

_PREAMBLE = Template('''\
"""Renders the tables of experiment "$name". Run from anywhere: python $script"""
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

HERE = Path(__file__).resolve().parent
DELIMITER = $delimiter


def load(name):
    return np.genfromtxt(HERE / name, names=True, delimiter=DELIMITER, dtype=None, encoding="utf-8")

''')

_ENSEMBLE = Template('''
def plot_panel(ax, prefix, secondary):
    traj = load(prefix + "trajectories.txt")
    env = load(prefix + "envelope.txt")
    for run_id in np.unique(traj["run_id"]):
        rows = traj[traj["run_id"] == run_id]
        ax.plot(np.log10(rows["e_j"]), rows[secondary], color="0.8", lw=0.5)
    for name in env.dtype.names:
        if name.startswith(secondary) and not name.endswith("_run"):
            ax.plot(np.log10(env["e_j"]), env[name], marker="+" if name == secondary else "d", label=name)
    thresholds = load(prefix + "thresholds.txt")
    for row in np.atleast_1d(thresholds):
        if row["found"] and str(row["secondary"]).startswith(secondary):
            ax.plot(np.log10(row["e_star"]), row["k_star"], "ko")
    ax.set_xlabel("log10 E_J")
    ax.set_ylabel(secondary)
    ax.invert_xaxis()
    ax.legend(fontsize="small")


PANELS = $panels
fig, axes = plt.subplots(len(PANELS), 1, figsize=(6, 3.5 * len(PANELS)), squeeze=False)
for ax, (prefix, secondary) in zip(axes[:, 0], PANELS):
    plot_panel(ax, prefix, secondary)
    ax.set_title(prefix.rstrip("_") or secondary)
fig.tight_layout()
fig.savefig(HERE / "$output", dpi=150)
''')

_MOEA = Template('''
PANELS = $panels
fig, axes = plt.subplots(len(PANELS), 1, figsize=(6, 3.5 * len(PANELS)), squeeze=False)
for ax, (prefix, secondary) in zip(axes[:, 0], PANELS):
    front = load(prefix + "moea_front.txt")
    ax.plot(np.log10(front["e_j"]), front[secondary], "k:", label="MOEA")
    if (HERE / (prefix + "mc_front.txt")).exists():
        mc = load(prefix + "mc_front.txt")
        ax.plot(np.log10(mc["e_j"]), mc[secondary], "+-", label="MC")
    ax.set_xlabel("log10 E_J")
    ax.set_ylabel(secondary)
    ax.invert_xaxis()
    ax.set_title(prefix.rstrip("_"))
    ax.legend(fontsize="small")
fig.tight_layout()
fig.savefig(HERE / "$output", dpi=150)
''')

_SURFACE = Template('''
surface = load("surface.txt")
fig = plt.figure(figsize=(10, 4))
ax = fig.add_subplot(1, 2, 1, projection="3d")
ax.scatter(np.log10(surface["e_j"]), surface["k_eps"], surface["fluence"], s=4)
ax.set_xlabel("log10 E_J")
ax.set_ylabel("K_eps")
ax.set_zlabel("fluence")
for i, name in enumerate(["k_eps", "fluence"]):
    proj = load(f"surface_{name}.txt")
    sub = fig.add_subplot(2, 2, 2 * (i + 1))
    sub.plot(np.log10(proj["e_j"]), proj[name], "k-")
    sub.set_ylabel(name)
    sub.invert_xaxis()
fig.tight_layout()
fig.savefig(HERE / "$output", dpi=150)
''')


class PlotScriptWriter:
    """Writes plot_<kind>.py next to the tables it reads"""

    def __init__(self, directory: Path, name: str, delimiter: str):
        self.directory = Path(directory)
        self.name = name
        self.delimiter = None if delimiter == " " else delimiter

    def _write(self, kind: str, body: str) -> Path:
        script = f"plot_{kind}.py"
        preamble = _PREAMBLE.substitute(name=self.name, script=script, delimiter=repr(self.delimiter))
        path = self.directory / script
        path.write_text(preamble + body, encoding="utf-8")
        logger.info(f"Plot script written to {path}")
        return path

    def ensemble(self, panels: List[Dict[str, str]]) -> Path:
        pairs = [(p["prefix"], p["secondary"]) for p in panels]
        return self._write("ensemble", _ENSEMBLE.substitute(panels=repr(pairs), output="ensemble.png"))

    def moea(self, panels: List[Dict[str, str]]) -> Path:
        pairs = [(p["prefix"], p["secondary"]) for p in panels]
        return self._write("moea", _MOEA.substitute(panels=repr(pairs), output="moea.png"))

    def surface(self) -> Path:
        return self._write("surface", _SURFACE.substitute(output="surface.png"))
