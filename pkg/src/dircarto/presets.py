"""Built-in experiment presets, one per reproduced figure.

Each preset is a config text plus an optional list of points. Points that
change several settings at once (e.g. omni vs directional) are listed in
the preset; single-axis sweeps use the ``[sweep]`` section of the config.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from dircarto.config import ExperimentConfig, parse_config

BASE = """\
[scenario]
width = 100
height = 100
rows = 10
cols = 10
sensors = 10
sources = 8
slots = {slots}
move_every = {move_every}
{layout}
[array]
elements = 8
spacing = 0.5
wavelength = 1.0
path_loss = 2.0
gain = 1.0

[noise]
deterministic = {deterministic}
snapshots = 100

[tracker]
block = 6
mode = {mode}
graph = {graph}

[sweep]
seeds = {seeds}
{sweep}
"""


@dataclass(frozen=True)
class Preset:
    name: str
    title: str
    text: str
    points: list = field(default_factory=list)  # [(label, {'section.key': value})]

    def config(self) -> ExperimentConfig:
        return parse_config(self.text, name=f"preset {self.name}")


def _text(slots=50, seeds="0:10", deterministic=True, mode="centralized", graph="complete",
          move_every=0, layout_seed=None, sweep=""):
    layout = f"layout_seed = {layout_seed}\n" if layout_seed is not None else ""
    return BASE.format(slots=slots, seeds=seeds, deterministic="true" if deterministic else "false",
                       mode=mode, graph=graph, move_every=move_every, layout=layout, sweep=sweep)


PRESETS = {
    "fig4": Preset(
        "fig4", "omni vs random directional vs adaptive beams, noiseless",
        _text(),
        [
            ("omni", {"array.elements": "1", "tracker.beams": "fixed"}),
            ("random-fixed", {"tracker.beams": "fixed"}),
            ("random-each-slot", {"tracker.beams": "random"}),
            ("adaptive", {}),
        ],
    ),
    "fig5": Preset("fig5", "adaptive centralized convergence, noiseless", _text()),
    "fig6": Preset(
        "fig6", "error over time for several noise levels, one geometry",
        _text(slots=100, seeds="0:50", deterministic=False, layout_seed=0),
        [
            ("expectation", {"noise.deterministic": "true"}),
            ("noiseless", {"noise.snr_db": "inf"}),
            ("10dB", {"noise.snr_db": "10"}),
            ("0dB", {"noise.snr_db": "0"}),
        ],
    ),
    "fig7": Preset(
        "fig7", "error after 20 slots versus SNR",
        _text(slots=20, seeds="0:20", deterministic=False, layout_seed=0,
              sweep="axis = noise.snr_db\nvalues = -10, -5, 0, 5, 10, 15, 20, 30, inf"),
    ),
    "fig8": Preset(
        "fig8", "error versus array elements, noiseless",
        _text(slots=20, seeds="0:20", sweep="axis = array.elements\nvalues = 2, 4, 8, 16"),
    ),
    "fig8b": Preset(
        "fig8b", "error versus number of emitters, noiseless",
        _text(slots=20, seeds="0:20", sweep="axis = scenario.sources\nvalues = 2, 4, 8, 12, 16"),
    ),
    "fig9": Preset("fig9", "tracking one relocating emitter, noiseless", _text(slots=100, move_every=20)),
    "fig10": Preset(
        "fig10", "distributed consensus on two nested graphs vs centralized",
        _text(seeds="0:20"),
        [
            ("centralized", {}),
            ("ring1", {"tracker.mode": "distributed", "tracker.graph": "ring:1"}),
            ("ring2", {"tracker.mode": "distributed", "tracker.graph": "ring:2"}),
        ],
    ),
    "fig11": Preset(
        "fig11", "distributed consensus versus alpha",
        _text(seeds="0:20", mode="distributed", graph="ring:1",
              sweep="axis = solver.alpha\nvalues = 0.1, 1, 10"),
    ),
}
