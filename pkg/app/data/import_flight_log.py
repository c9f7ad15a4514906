import json
import os
import sys

import pandas as pd
from dotenv import load_dotenv

# Add parent directory to path to allow importing app modules
parent_dir = os.path.abspath(os.path.join(os.path.dirname(__file__), "../.."))
sys.path.append(parent_dir)

from app.exceptions import RaceSimError
from app.services import analysis
from app.services.track_service import get_track


def import_flight_log(csv_path, track, out_dir, column_map=None, run=None):
    """Convert a recorded flight log into the lap tables a simulated run writes.

    ``column_map`` renames log columns to t, px, py, pz (and optionally vx, vy, vz).
    """
    try:
        print(f"Reading flight log from {csv_path}...")
        df = pd.read_csv(csv_path)
        if column_map:
            df = df.rename(columns=column_map)

        required_columns = ["t", "px", "py", "pz"]
        missing_columns = [col for col in required_columns if col not in df.columns]
        if missing_columns:
            print(f"Error: flight log is missing required columns: {missing_columns}")
            return False

        df = df.sort_values("t").reset_index(drop=True)
        gate_map = get_track(track)
        run = run or os.path.splitext(os.path.basename(csv_path))[0]

        print(f"Replaying {len(df)} samples against {gate_map.name}...")
        laps, sectors = analysis.laps_from_positions(df, gate_map, run=run)
        if not laps:
            print("No complete lap found in the flight log")
            return False

        os.makedirs(out_dir, exist_ok=True)
        laps_df = analysis.laps_frame(laps)
        laps_df.to_csv(os.path.join(out_dir, "laps.csv"), index=False)
        analysis.sectors_frame(sectors).to_csv(os.path.join(out_dir, "sectors.csv"), index=False)
        print(analysis.format_summary(analysis.summarize(laps_df)))
        print(f"Wrote {len(laps)} lap(s) to {out_dir}")
        return True

    except (OSError, RaceSimError, pd.errors.ParserError) as e:
        print(f"Error importing flight log: {str(e)}")
        return False


if __name__ == "__main__":
    # Load environment variables
    load_dotenv()

    # Check command line arguments
    if len(sys.argv) < 4:
        print("Usage: python import_flight_log.py <path_to_csv_file> <track> <out_dir> [column_map.json]")
        sys.exit(1)

    csv_path, track, out_dir = sys.argv[1:4]

    # Check if file exists
    if not os.path.exists(csv_path):
        print(f"Error: File {csv_path} not found")
        sys.exit(1)

    column_map = None
    if len(sys.argv) > 4:
        with open(sys.argv[4]) as f:
            column_map = json.load(f)

    success = import_flight_log(csv_path, track, out_dir, column_map)

    if not success:
        sys.exit(1)
