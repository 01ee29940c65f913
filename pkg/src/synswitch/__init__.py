"""Train small sigmoid networks, fork them into task-specialized variants, and
switch or blend between the variants with a weight modulation matrix."""

from synswitch.analysis import (
    EvalReport,
    Histogram,
    evaluate,
    firing_rate_distribution,
    hidden_superposition,
    trajectory_stats,
    weight_histogram,
)
from synswitch.core import LabelCodec, Network, NetworkSpec, decode, forward, init_network
from synswitch.data import Dataset, Pattern, SynthSpec, load_images, split, synth_faces
from synswitch.modulation import BlendSpec, ModulationMatrix, blend, diff, source_unit_map, sweep, threshold_map
from synswitch.trainer import LossTrace, TrainConfig, fork_specialize, gradient, train

__version__ = "0.1.0"
