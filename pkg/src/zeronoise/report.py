"""CSV reports and run manifests.

Every CSV starts with a ``schema=N`` line and a ``#`` line pointing at the
run manifest and the config hash; floats use 17 significant digits so they
round-trip.  Wall-clock timings live only in the manifest, which keeps the
CSVs byte-identical across repeated runs.
"""

import hashlib
import json
import math
import platform
from pathlib import Path

import numpy as np
import scipy

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"


def package_version():
    from importlib.metadata import PackageNotFoundError, version

    try:
        return version("zeronoise")
    except PackageNotFoundError:
        return "0+unknown"


def versions():
    return {"zeronoise": package_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "python": platform.python_version()}


def fmt(value):
    """Deterministic text for one CSV field."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return f"{value:.17g}"
    text = str(value)
    if any(c in text for c in ",\n\""):
        raise ValueError(f"CSV field may not contain commas or quotes: {text!r}")
    return text


def manifest_line(config_hash):
    return f"manifest={MANIFEST_NAME} config_hash={config_hash}"


def write_csv(path, columns, rows, config_hash, schema=SCHEMA_VERSION):
    """Write rows (sequences or dicts keyed by column) under the standard header."""
    lines = [f"schema={schema}", f"# {manifest_line(config_hash)}", ",".join(columns)]
    for row in rows:
        if isinstance(row, dict):
            row = [row.get(c) for c in columns]
        lines.append(",".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def read_csv(path):
    """Rows of a report CSV as dicts of strings (header lines skipped)."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
    if not lines or not lines[0].startswith("schema="):
        raise ValueError(f"{path}: missing schema line")
    columns = lines[1].split(",")
    return [dict(zip(columns, ln.split(","))) for ln in lines[2:]]


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, config, command, outputs, timings, extra=None):
    """``manifest.json`` with the config text and hash, seeds, versions, timings and file digests."""
    out_dir = Path(out_dir)
    data = {
        "command": command,
        "config_hash": config.config_hash,
        "config": config.text,
        "seeds": list(config.seeds),
        "versions": versions(),
        "timings": timings,
        "outputs": {Path(p).name: file_digest(p) for p in outputs},
    }
    if extra:
        data.update(extra)
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def verify_manifest(out_dir):
    """True when the stored config re-hashes to the stored hash and file digests match."""
    out_dir = Path(out_dir)
    data = json.loads((out_dir / MANIFEST_NAME).read_text())
    if hashlib.sha256(data["config"].encode()).hexdigest() != data["config_hash"]:
        return False
    return all(file_digest(out_dir / name) == digest for name, digest in data["outputs"].items())


def eps_tag(eps):
    """Short, stable text for a noise level in file names."""
    return f"{eps:.6g}"


def parameter_text(params):
    return ";".join(f"{k}={params[k]}" for k in sorted(params))
