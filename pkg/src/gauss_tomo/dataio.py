"""File formats: versioned dataset files and self-describing reports.

Dataset CSV: first line `# gauss-tomo v1, scheme=..., seed=..., eta=...,
<more key=value fields>, config=<hash16>`, second line the column names
(theta,x for homodyne, x,p for heterodyne), then one event per row.
The hash is sha256 of the header text between "# " and ", config=",
truncated to 16 hex chars, so any file can be integrity-checked from
its own content.

Dataset binary (for runs too big for CSV): magic GTB1, uint32 LE header
length, header JSON (same fields as the CSV header), uint64 LE payload
float count, then little-endian float64 pairs (theta,x) or (x,p).

Reports are JSON with a "config" object and its full sha256 in
"config_sha256"; benchmark and gamma-map tables are also emitted as
flat CSV behind a one-line `# gauss-tomo v1, kind=...` comment header.
Nothing in any writer depends on time or machine, so identical inputs
give byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import DataFormatError, UnknownScheme
from .sampling import HeterodyneDataset, HomodyneDataset

FORMAT_VERSION = "gauss-tomo v1"
BIN_MAGIC = b"GTB1"

_FIXED_KEYS = ("scheme", "seed", "eta")
_LIST_KEYS = {"g_elec", "g_w", "state"}
_INT_KEYS = {"seed", "angle_count", "n_per_angle", "n_pairs"}
_FLOAT_KEYS = {"eta", "offset"}


def canonical_config_hash(config: dict) -> str:
    """sha256 over the sorted compact JSON dump of a config dict."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _meta_value_to_str(key: str, value) -> str:
    if key in _LIST_KEYS:
        return ";".join(repr(float(v)) for v in value)
    if key == "thermalized":
        return f"{value['method']};{value['seed']}"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _meta_value_from_str(key: str, raw: str):
    if key in _LIST_KEYS:
        return [float(v) for v in raw.split(";")]
    if key == "thermalized":
        method, seed = raw.split(";")
        return {"method": method, "seed": int(seed)}
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    return raw


def _header_body(meta: dict) -> str:
    for key in _FIXED_KEYS:
        if key not in meta:
            raise DataFormatError(f"dataset meta is missing required key {key!r}")
    parts = [FORMAT_VERSION]
    parts += [f"{k}={_meta_value_to_str(k, meta[k])}" for k in _FIXED_KEYS]
    for k in sorted(meta):
        if k not in _FIXED_KEYS:
            parts.append(f"{k}={_meta_value_to_str(k, meta[k])}")
    return ", ".join(parts)


def _header_line(meta: dict) -> str:
    body = _header_body(meta)
    digest = hashlib.sha256(body.encode()).hexdigest()[:16]
    return f"# {body}, config={digest}"


def _parse_header_line(line: str, lineno: int = 1) -> tuple[dict, str, str]:
    if not line.startswith("# "):
        raise DataFormatError(f"line {lineno}: expected '# {FORMAT_VERSION}, ...' header")
    content = line[2:].rstrip("\n")
    if not content.startswith(FORMAT_VERSION + ", "):
        raise DataFormatError(f"line {lineno}: unsupported format version in {content!r}")
    marker = ", config="
    cut = content.rfind(marker)
    if cut < 0:
        raise DataFormatError(f"line {lineno}: header carries no config hash")
    body = content[:cut]
    stored = content[cut + len(marker):]
    meta = {}
    for item in body[len(FORMAT_VERSION) + 2:].split(", "):
        if "=" not in item:
            raise DataFormatError(f"line {lineno}: malformed header field {item!r}")
        key, raw = item.split("=", 1)
        meta[key] = _meta_value_from_str(key, raw)
    return meta, body, stored


def _check_scheme(meta: dict) -> str:
    scheme = meta.get("scheme")
    if scheme not in ("hom", "het"):
        raise UnknownScheme(f"unknown measurement scheme {scheme!r}")
    return scheme


def write_dataset(path, dataset, fmt: str = "csv") -> None:
    if fmt == "csv":
        _write_dataset_csv(path, dataset)
    elif fmt == "bin":
        _write_dataset_bin(path, dataset)
    else:
        raise ValueError(f"fmt must be 'csv' or 'bin', got {fmt!r}")


def _dataset_rows(dataset) -> tuple[str, np.ndarray]:
    if isinstance(dataset, HomodyneDataset):
        theta = np.concatenate(
            [np.full(len(x), th) for th, x in zip(dataset.angles, dataset.samples)]
        )
        return "theta,x", np.column_stack((theta, np.concatenate(dataset.samples)))
    if isinstance(dataset, HeterodyneDataset):
        return "x,p", dataset.pairs
    raise TypeError(f"unsupported dataset type {type(dataset)!r}")


def _write_dataset_csv(path, dataset) -> None:
    columns, rows = _dataset_rows(dataset)
    with open(path, "w", newline="\n") as f:
        f.write(_header_line(dataset.meta) + "\n")
        f.write(columns + "\n")
        np.savetxt(f, rows, fmt="%.17g", delimiter=",")


def _write_dataset_bin(path, dataset) -> None:
    columns, rows = _dataset_rows(dataset)
    body = _header_body(dataset.meta)
    header = dict(dataset.meta)
    header["version"] = FORMAT_VERSION
    header["columns"] = columns
    header["config"] = hashlib.sha256(body.encode()).hexdigest()[:16]
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    payload = np.ascontiguousarray(rows, dtype="<f8")
    with open(path, "wb") as f:
        f.write(BIN_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(struct.pack("<Q", payload.size))
        f.write(payload.tobytes())


def _dataset_from_rows(meta: dict, rows: np.ndarray):
    scheme = _check_scheme(meta)
    try:
        if scheme == "het":
            return HeterodyneDataset(rows, meta)
        theta = rows[:, 0]
        boundaries = np.flatnonzero(np.diff(theta) != 0.0) + 1
        angles = theta[np.concatenate(([0], boundaries))] if theta.size else theta
        groups = np.split(rows[:, 1], boundaries)
        return HomodyneDataset(tuple(float(a) for a in angles), tuple(groups), meta)
    except ValueError as exc:
        raise DataFormatError(f"dataset content is inconsistent: {exc}") from exc


def _read_rows_csv(path, expected_columns: str):
    with open(path) as f:
        try:
            header = f.readline()
        except UnicodeDecodeError as exc:
            raise DataFormatError(f"not a text dataset file: {exc}") from exc
        if header == "":
            raise DataFormatError("line 1: empty file")
        meta, _, _ = _parse_header_line(header)
        columns = f.readline().rstrip("\n")
        if columns != expected_columns.get(_check_scheme(meta)):
            raise DataFormatError(
                f"line 2: expected columns {expected_columns.get(meta.get('scheme'))!r}, got {columns!r}"
            )
        try:
            rows = np.loadtxt(f, delimiter=",", ndmin=2)
        except (ValueError, UnicodeDecodeError):
            rows = None
        if rows is None:
            # slow pass to point at the offending line
            with open(path, errors="replace") as g:
                for lineno, line in enumerate(g, start=1):
                    if lineno <= 2:
                        continue
                    parts = line.rstrip("\n").split(",")
                    try:
                        [float(p) for p in parts]
                        ok = len(parts) == 2
                    except ValueError:
                        ok = False
                    if not ok:
                        raise DataFormatError(f"line {lineno}: cannot parse {line.rstrip()!r}")
            raise DataFormatError("dataset rows are malformed")
        if rows.size == 0:
            raise DataFormatError("line 3: dataset has no rows")
        if rows.shape[1] != 2:
            raise DataFormatError(f"line 3: expected 2 columns, got {rows.shape[1]}")
    return meta, rows


def read_dataset(path):
    """Load a dataset file, CSV or binary, validating header and scheme."""
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == BIN_MAGIC:
        return _read_dataset_bin(path)
    meta, rows = _read_rows_csv(path, {"hom": "theta,x", "het": "x,p"})
    return _dataset_from_rows(meta, rows)


def _read_dataset_bin(path):
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != BIN_MAGIC:
        raise DataFormatError("not a gauss-tomo binary dataset")
    (hlen,) = struct.unpack_from("<I", raw, 4)
    if 8 + hlen + 8 > len(raw):
        raise DataFormatError("binary header is truncated")
    try:
        header = json.loads(raw[8 : 8 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"binary header is not valid JSON: {exc}") from exc
    if header.get("version") != FORMAT_VERSION:
        raise DataFormatError(f"unsupported format version {header.get('version')!r}")
    (count,) = struct.unpack_from("<Q", raw, 8 + hlen)
    payload = raw[8 + hlen + 8:]
    if count * 8 != len(payload):
        raise DataFormatError(
            f"payload length mismatch: header says {count} values, file has {len(payload) // 8}"
        )
    if count % 2 != 0:
        raise DataFormatError("payload float count must be even (two columns)")
    rows = np.frombuffer(payload, dtype="<f8").astype(float).reshape(-1, 2)
    meta = {k: v for k, v in header.items() if k not in ("version", "columns", "config")}
    return _dataset_from_rows(meta, rows)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_report_json(path, config: dict, body: dict) -> dict:
    """Write a report embedding its config and the config's sha256."""
    payload = {"config": _json_safe(config), **_json_safe(body)}
    payload["config_sha256"] = canonical_config_hash(payload["config"])
    with open(path, "w", newline="\n") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return payload


def _report_csv_header(kind: str, seed, config: dict) -> str:
    # config_ref ties the CSV to its JSON sibling; config hashes the header
    # text itself so verify can re-derive it from the file alone.
    body = f"{FORMAT_VERSION}, kind={kind}, seed={seed}, config_ref={canonical_config_hash(config)[:16]}"
    digest = hashlib.sha256(body.encode()).hexdigest()[:16]
    return f"# {body}, config={digest}"


def _fmt_cell(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def benchmark_report_csv(report) -> str:
    """Flat CSV: mu,lambda,scheme,N,m,dhs_mean,dhs_stderr,gamma,gamma_analytic.

    Heterodyne statistics do not depend on m, so the het row for every
    (N, m) pair repeats them; gamma on both rows is the (N, m) ratio.
    """
    cfg = report.config
    lines = [
        _report_csv_header("benchmark", cfg.seed, cfg.to_dict()),
        "mu,lambda,scheme,N,m,dhs_mean,dhs_stderr,gamma,gamma_analytic",
    ]
    mu = repr(cfg.state.mu)
    lam = repr(cfg.state.lam)
    for n in cfg.sample_sizes:
        for m in cfg.angle_counts:
            hom = report.hom[(n, m)]
            het = report.het[n]
            gamma, _ = report.gamma[(n, m)]
            g_an = report.gamma_analytic.get(m, math.nan)
            for scheme, st in (("hom", hom), ("het", het)):
                lines.append(
                    ",".join(
                        [
                            mu,
                            lam,
                            scheme,
                            str(n),
                            str(m),
                            _fmt_cell(st.mean),
                            _fmt_cell(st.stderr),
                            _fmt_cell(gamma),
                            _fmt_cell(g_an),
                        ]
                    )
                )
    return "\n".join(lines) + "\n"


def write_benchmark_csv(path, report) -> None:
    with open(path, "w", newline="\n") as f:
        f.write(benchmark_report_csv(report))


def gamma_map_csv(rows, seed, config: dict) -> str:
    lines = [
        _report_csv_header("gamma-map", seed, config),
        "mu,lambda,gamma",
    ]
    for row in rows:
        lines.append(
            ",".join([repr(float(row["mu"])), repr(float(row["lambda"])), _fmt_cell(row["gamma"])])
        )
    return "\n".join(lines) + "\n"


def verify_file(path) -> tuple[bool, str]:
    """Recompute the embedded config hash of any toolkit output file."""
    path = Path(path)
    head = path.read_bytes()[:4]
    if head == BIN_MAGIC:
        raw = path.read_bytes()
        try:
            (hlen,) = struct.unpack_from("<I", raw, 4)
            header = json.loads(raw[8 : 8 + hlen].decode())
        except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataFormatError(f"corrupt binary header: {exc}") from exc
        stored = header.get("config")
        meta = {k: v for k, v in header.items() if k not in ("version", "columns", "config")}
        expect = hashlib.sha256(_header_body(meta).encode()).hexdigest()[:16]
        if stored == expect:
            return True, f"{path}: binary dataset, config hash {stored} ok"
        return False, f"{path}: config hash mismatch (stored {stored}, derived {expect})"
    try:
        text = path.read_text()
    except UnicodeDecodeError as exc:
        raise DataFormatError(f"unrecognized file format: {exc}") from exc
    if not text:
        raise DataFormatError("line 1: empty file")
    first = text.split("\n", 1)[0]
    if first.startswith("# "):
        _, body, stored = _parse_header_line(first)
        expect = hashlib.sha256(body.encode()).hexdigest()[:16]
        if stored == expect:
            return True, f"{path}: header config hash {stored} ok"
        return False, f"{path}: config hash mismatch (stored {stored}, derived {expect})"
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"unrecognized file format: {exc}") from exc
    if not isinstance(payload, dict) or "config" not in payload or "config_sha256" not in payload:
        raise DataFormatError("JSON report lacks config/config_sha256 fields")
    expect = canonical_config_hash(payload["config"])
    if payload["config_sha256"] == expect:
        return True, f"{path}: JSON report, config sha256 ok"
    return False, (
        f"{path}: config sha256 mismatch (stored {payload['config_sha256']}, derived {expect})"
    )
