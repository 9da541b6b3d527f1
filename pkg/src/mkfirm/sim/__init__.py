from .analysis import StreamStats, analyze, masquerade_events, write_trace_csv
from .delay import DelayModel, DelaySampler, EpochSchedule, builtin_histogram, load_histogram, sample_delay
from .engine import Adversary, FrameRecord, SimEvent, SimTrace, Simulator, run

__all__ = ["Adversary", "DelayModel", "DelaySampler", "EpochSchedule", "FrameRecord", "SimEvent",
           "SimTrace", "Simulator", "StreamStats", "analyze", "builtin_histogram", "load_histogram",
           "masquerade_events", "run", "sample_delay", "write_trace_csv"]
