"""
Result export module
Writes scenario tables, trajectories, spectra, solver traces and run manifests
"""

import json
import os

import pandas as pd

FLOAT_FORMAT = "%.12g"


class ResultExporter:
    """Writes every result file of a run below one output directory"""

    def __init__(self, output_dir):
        self.output_dir = output_dir
        os.makedirs(self.output_dir, exist_ok=True)

    def path(self, filename):
        return os.path.join(self.output_dir, filename)

    def write_frame(self, frame, filename):
        """
        Write a DataFrame as CSV with a header row and a fixed float format.
        Returns (filepath, message); filepath is None on failure.
        """
        filepath = self.path(filename)
        try:
            os.makedirs(os.path.dirname(filepath) or ".", exist_ok=True)
            frame.to_csv(filepath, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
            return filepath, f"{len(frame)} row(s) written"
        except OSError as e:
            return None, f"Error writing {filepath}: {str(e)}"

    def write_trajectory(self, trajectory, filename, joint=False):
        frame = trajectory.to_frame(joint=joint)
        frame.insert(0, 'initial_sum_rate', trajectory.initial_sum_rate)
        return self.write_frame(frame, filename)

    def write_spectrum(self, frame, filename):
        """bin, magnitude_db rows of one filter"""
        return self.write_frame(frame[['bin', 'magnitude_db']], filename)

    def write_sdp_trace(self, solution, filename):
        return self.write_frame(solution.trace_frame(), filename)

    def write_manifest(self, manifest, filename="manifest.json"):
        filepath = self.path(filename)
        try:
            with open(filepath, "w") as fh:
                json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True, default=str)
                fh.write("\n")
            return filepath, "Manifest written"
        except OSError as e:
            return None, f"Error writing {filepath}: {str(e)}"

    def read_frame(self, filename):
        return pd.read_csv(self.path(filename))
