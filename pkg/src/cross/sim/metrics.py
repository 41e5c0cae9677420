"""Episode-level performance metrics."""

from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass(frozen=True)
class MetricReport:
    queue_veh: float        # mean stopped vehicles per intersection per second
    speed_mps: float        # vehicle-time-weighted mean speed of moving vehicles
    completion_vps: float   # arrivals per second of episode
    trip_time_s: float      # mean depart-to-arrive time, arrived vehicles only
    trip_delay_s: float     # mean trip time minus free-flow time, arrived only
    trip_duration_s: float  # mean time in system over all vehicles; unfinished
                            # trips count until episode end

    @staticmethod
    def csv_header() -> list[str]:
        return [f.name for f in fields(MetricReport)]

    def csv_row(self) -> list[str]:
        return [repr(getattr(self, f.name)) for f in fields(MetricReport)]
