"""
Utility functions for the command line
"""

import math
import re


def parse_seeds(text):
    """Parse '0,1,2' or a range '0-4' (inclusive) into a list of seeds"""
    if text is None or not str(text).strip():
        return False, "Seed list cannot be empty"
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        match = re.fullmatch(r"(\d+)-(\d+)", part)
        try:
            if match:
                lo, hi = int(match.group(1)), int(match.group(2))
                if hi < lo:
                    return False, f"Seed range '{part}' is reversed"
                seeds.extend(range(lo, hi + 1))
            else:
                seed = int(part)
                if seed < 0:
                    return False, "Seeds must be non-negative"
                seeds.append(seed)
        except ValueError:
            return False, f"Invalid seed '{part}'"
    if len(set(seeds)) != len(seeds):
        return False, "Seed list contains duplicates"
    return True, seeds


def parse_float_list(text, sort=False):
    """Parse '0,5,10' into floats; 'start:stop:step' expands inclusively"""
    if text is None or not str(text).strip():
        return False, "List cannot be empty"
    text = str(text).strip()
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            if step <= 0 or stop < start:
                return False, "Range needs start <= stop and a positive step"
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            values = [start + k * step for k in range(count)]
        else:
            values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        return False, f"Invalid number list '{text}'"
    if not values:
        return False, "List cannot be empty"
    return True, sorted(values) if sort else values


def parse_int_list(text):
    ok, values = parse_float_list(text)
    if not ok:
        return ok, values
    if any(v != int(v) for v in values):
        return False, "Expected whole numbers"
    return True, [int(v) for v in values]


def validate_threads(value):
    """Thread count between 1 and 256"""
    try:
        threads = int(value)
    except (TypeError, ValueError):
        return False, "Thread count must be an integer"
    if threads < 1:
        return False, "Thread count must be at least 1"
    if threads > 256:
        return False, "Thread count seems unreasonably high"
    return True, threads


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


def linear_to_db(value):
    return 10.0 * math.log10(value)


def percent_gain(value, reference):
    """Relative gain of value over reference in percent"""
    if reference == 0:
        return math.nan
    return 100.0 * (value - reference) / abs(reference)
