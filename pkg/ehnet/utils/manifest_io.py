"""Manifest and corpus index files

Both are tab-separated with `#! key=value` header lines; plain `#` lines are comments.
Relative paths are resolved against the file's directory.

Manifest columns: clean, noise, rir (`-` for none), target SNR dB, seed, gain dB.
Index columns: pair id, noisy, clean, achieved SNR dB, target SNR dB.
"""

import math
import os
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from pydantic import ValidationError

from ehnet.core.exceptions import InputDataError
from ehnet.models.schemas import DatasetManifest, IndexEntry, MixSpec

NO_RIR = "-"


def _split_lines(path: Path) -> Tuple[Dict[str, str], List[Tuple[int, List[str]]]]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise InputDataError(f"cannot read {path}: {e.strerror}", path=str(path)) from e
    header: Dict[str, str] = {}
    rows: List[Tuple[int, List[str]]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith("#!"):
            key, sep, value = line[2:].partition("=")
            if not sep:
                raise InputDataError(f"{path}:{lineno}: expected '#! key=value'")
            header[key.strip()] = value.strip()
        elif line.strip() and not line.lstrip().startswith("#"):
            rows.append((lineno, line.rstrip("\n").split("\t")))
    return header, rows


def _resolve(value: str, base: Path) -> Path:
    path = Path(value).expanduser()
    return path if path.is_absolute() else base / path


def _relative(path: Path, base: Path) -> str:
    try:
        return Path(os.path.relpath(Path(path).resolve(), base.resolve())).as_posix()
    except ValueError:
        return str(path)


def _format_float(value: float) -> str:
    return "inf" if math.isinf(value) else repr(float(value))


def read_manifest(path: Path) -> DatasetManifest:
    path = Path(path)
    header, rows = _split_lines(path)
    base = path.resolve().parent
    specs = []
    for lineno, fields in rows:
        if len(fields) != 6:
            raise InputDataError(f"{path}:{lineno}: expected 6 tab-separated fields, got {len(fields)}")
        clean, noise, rir, snr, seed, gain = (f.strip() for f in fields)
        try:
            specs.append(MixSpec(
                clean_path=_resolve(clean, base),
                noise_path=_resolve(noise, base),
                rir_path=None if rir == NO_RIR else _resolve(rir, base),
                target_snr_db=float(snr),
                seed=int(seed),
                gain_db=float(gain),
            ))
        except (ValueError, ValidationError) as e:
            raise InputDataError(f"{path}:{lineno}: invalid record", detail=str(e)) from e
    try:
        return DatasetManifest(
            split=header.get("split", "train"),
            sample_rate=int(header.get("sample_rate", 16000)),
            rng=header.get("rng", "philox"),
            dry_target=header.get("dry_target", "false").lower() in ("1", "true", "yes"),
            specs=specs,
        )
    except (ValueError, ValidationError) as e:
        raise InputDataError(f"{path}: invalid manifest header", detail=str(e)) from e


def write_manifest(path: Path, manifest: DatasetManifest) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = path.resolve().parent
    lines = [
        f"#! split={manifest.split}",
        f"#! sample_rate={manifest.sample_rate}",
        f"#! rng={manifest.rng}",
        f"#! dry_target={str(manifest.dry_target).lower()}",
        "# clean\tnoise\trir\tsnr_db\tseed\tgain_db",
    ]
    for spec in manifest.specs:
        rir = NO_RIR if spec.rir_path is None else _relative(spec.rir_path, base)
        lines.append("\t".join([
            _relative(spec.clean_path, base),
            _relative(spec.noise_path, base),
            rir,
            _format_float(spec.target_snr_db),
            str(spec.seed),
            _format_float(spec.gain_db),
        ]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_index(path: Path) -> List[IndexEntry]:
    path = Path(path)
    _, rows = _split_lines(path)
    base = path.resolve().parent
    entries = []
    for lineno, fields in rows:
        if len(fields) != 5:
            raise InputDataError(f"{path}:{lineno}: expected 5 tab-separated fields, got {len(fields)}")
        pair_id, noisy, clean, achieved, target = (f.strip() for f in fields)
        try:
            entries.append(IndexEntry(
                pair_id=pair_id,
                noisy_path=_resolve(noisy, base),
                clean_path=_resolve(clean, base),
                achieved_snr_db=float(achieved),
                target_snr_db=float(target),
            ))
        except (ValueError, ValidationError) as e:
            raise InputDataError(f"{path}:{lineno}: invalid index entry", detail=str(e)) from e
    return entries


def write_index(path: Path, entries: Iterable[IndexEntry], header: Optional[Dict[str, str]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = path.resolve().parent
    lines = [f"#! {key}={value}" for key, value in (header or {}).items()]
    lines.append("# pair_id\tnoisy\tclean\tachieved_snr_db\ttarget_snr_db")
    for entry in entries:
        lines.append("\t".join([
            entry.pair_id,
            _relative(entry.noisy_path, base),
            _relative(entry.clean_path, base),
            f"{entry.achieved_snr_db:.4f}",
            _format_float(entry.target_snr_db),
        ]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
