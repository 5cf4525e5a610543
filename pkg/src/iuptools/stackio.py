"""On-disk formats: frame stacks, object scenes and analysis map bundles.

Frames are stored as binary 16-bit PGM (P5, maxval 65535, big-endian samples)
with one linear gain for the whole stack recorded in a line-oriented UTF-8
manifest ("key = value", arrays comma-separated). Maps export as raw
little-endian float32 with a text sidecar per map. Every file is written to a
".partial" path first and moved into place, so interrupted writes never leave
a final-named file behind.
"""

from __future__ import annotations

import hashlib
import os
import re
from pathlib import Path

import numpy as np

from . import __version__
from .fringes import AnalysisResult, FrameStack
from .optics import ObjectScene

__all__ = [
    "StackFormatError",
    "StackIntegrityError",
    "UnsupportedVersionError",
    "write_stack",
    "read_stack",
    "export_maps",
    "write_scene",
    "read_scene",
    "parse_key_values",
    "read_config_file",
]

STACK_FORMAT_VERSION = 1
SCENE_FORMAT_VERSION = 1
MAPS_FORMAT_VERSION = 1
STACK_MANIFEST = "stack.manifest"
SCENE_MANIFEST = "scene.manifest"
MAPS_MANIFEST = "maps.manifest"

_PGM_HEADER = re.compile(rb"^P5\s+(\d+)\s+(\d+)\s+(\d+)\s")


class StackFormatError(ValueError):
    """Malformed or inconsistent on-disk stack/scene/map data."""


class StackIntegrityError(StackFormatError):
    """Stored checksum does not match the file on disk."""


class UnsupportedVersionError(StackFormatError):
    """File declares a format version newer than this toolkit reads."""


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".partial")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def parse_key_values(text: str) -> dict[str, str]:
    """Parse "key = value" lines; '#' starts a comment, blank lines ignored."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise StackFormatError(
                f"line {lineno}: expected 'key = value', got {line!r}"
            )
        values[key.strip()] = value.strip()
    return values


def read_config_file(path: str | Path) -> dict[str, str]:
    return parse_key_values(Path(path).read_text(encoding="utf-8"))


def _pgm_bytes(frame_u16: np.ndarray) -> bytes:
    h, w = frame_u16.shape
    header = f"P5\n{w} {h}\n65535\n".encode("ascii")
    return header + frame_u16.astype(">u2").tobytes()


def _parse_pgm(payload: bytes, source: str) -> np.ndarray:
    match = _PGM_HEADER.match(payload)
    if match is None:
        raise StackFormatError(f"{source}: not a binary P5 PGM file")
    w, h, maxval = (int(match.group(i)) for i in (1, 2, 3))
    if maxval != 65535:
        raise StackFormatError(f"{source}: expected 16-bit maxval 65535, got {maxval}")
    data = payload[match.end() :]
    expected = w * h * 2
    if len(data) != expected:
        raise StackFormatError(f"{source}: expected {expected} sample bytes, got {len(data)}")
    return np.frombuffer(data, dtype=">u2").reshape(h, w)


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def write_stack(stack: FrameStack, directory: str | Path, gain: float | None = None) -> Path:
    """Write K PGM frames plus a manifest; returns the manifest path.

    With gain=None the gain is picked so the largest count maps to 65535.
    An explicit gain that would push any sample past 65535 raises
    OverflowError (counts are stored scaled, never clamped).
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    max_count = float(stack.frames.max())
    if gain is None:
        gain = 65535.0 / max_count if max_count > 0 else 1.0
    if not gain > 0:
        raise ValueError("gain must be > 0")
    scaled = np.rint(stack.frames * gain)
    if float(scaled.max()) > 65535.0:
        raise OverflowError(
            f"counts scaled by gain {gain:g} exceed the 16-bit range "
            f"(max scaled sample {scaled.max():.0f})"
        )

    names: list[str] = []
    digests: list[str] = []
    for i in range(stack.frame_count):
        name = f"frame_{i:04d}.pgm"
        payload = _pgm_bytes(scaled[i].astype(np.uint16))
        _atomic_write_bytes(directory / name, payload)
        names.append(name)
        digests.append(hashlib.sha256(payload).hexdigest())

    lines = [
        f"format_version = {STACK_FORMAT_VERSION}",
        f"width = {stack.width}",
        f"height = {stack.height}",
        f"frame_count = {stack.frame_count}",
        f"gain = {_fmt(gain)}",
        "scan_phases = " + ",".join(_fmt(p) for p in stack.scan_phases),
        "frame_files = " + ",".join(names),
        "frame_sha256 = " + ",".join(digests),
    ]
    for key in ("pump_nm", "detected_nm", "undetected_nm", "exposure_ms", "pixel_pitch_um"):
        if key in stack.meta:
            lines.append(f"{key} = {_fmt(stack.meta[key])}")
    manifest = directory / STACK_MANIFEST
    _atomic_write_text(manifest, "\n".join(lines) + "\n")
    return manifest


def _require(values: dict[str, str], key: str, source: str) -> str:
    if key not in values:
        raise StackFormatError(f"{source}: manifest is missing required key {key!r}")
    return values[key]


def read_stack(manifest_path: str | Path) -> FrameStack:
    """Load a stack written by write_stack, validating geometry and checksums."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / STACK_MANIFEST
    if not manifest_path.is_file():
        raise StackFormatError(f"stack manifest not found: {manifest_path}")
    source = str(manifest_path)
    try:
        values = parse_key_values(manifest_path.read_text(encoding="utf-8"))
    except ValueError as err:
        raise StackFormatError(f"{source}: {err}") from None

    version = int(_require(values, "format_version", source))
    if version > STACK_FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{source}: format_version {version} is newer than supported "
            f"({STACK_FORMAT_VERSION})"
        )
    width = int(_require(values, "width", source))
    height = int(_require(values, "height", source))
    frame_count = int(_require(values, "frame_count", source))
    gain = float(_require(values, "gain", source))
    if not gain > 0:
        raise StackFormatError(f"{source}: gain must be > 0")
    phases = [float(v) for v in _require(values, "scan_phases", source).split(",") if v != ""]
    names = [v for v in _require(values, "frame_files", source).split(",") if v != ""]
    digests = [v for v in _require(values, "frame_sha256", source).split(",") if v != ""]
    if len(names) != frame_count:
        raise StackFormatError(
            f"{source}: frame_count is {frame_count} but {len(names)} frame file(s) listed"
        )
    if len(digests) != frame_count:
        raise StackFormatError(
            f"{source}: frame_count is {frame_count} but {len(digests)} checksum(s) listed"
        )
    if len(phases) != frame_count:
        raise StackFormatError(
            f"{source}: frame_count is {frame_count} but {len(phases)} scan phase(s) listed"
        )

    frames = np.empty((frame_count, height, width))
    for i, (name, digest) in enumerate(zip(names, digests)):
        frame_path = manifest_path.parent / name
        if not frame_path.is_file():
            raise StackFormatError(f"{source}: missing frame file {name}")
        payload = frame_path.read_bytes()
        actual = hashlib.sha256(payload).hexdigest()
        if actual != digest:
            raise StackIntegrityError(f"{source}: checksum mismatch for frame {name}")
        samples = _parse_pgm(payload, name)
        if samples.shape != (height, width):
            raise StackFormatError(
                f"{source}: frame {name} is {samples.shape[1]}x{samples.shape[0]}, "
                f"manifest says {width}x{height}"
            )
        frames[i] = samples.astype(np.float64) / gain

    meta = {"gain": gain}
    for key in ("pump_nm", "detected_nm", "undetected_nm", "exposure_ms", "pixel_pitch_um"):
        if key in values:
            meta[key] = float(values[key])
    return FrameStack(frames, np.array(phases), meta)


def _write_raw_map(
    directory: Path, name: str, data: np.ndarray, extra_sidecar: list[str] | None = None
) -> Path:
    raw_path = directory / f"{name}.f32"
    _atomic_write_bytes(raw_path, np.ascontiguousarray(data, dtype="<f4").tobytes())
    sidecar = [
        f"width = {data.shape[1]}",
        f"height = {data.shape[0]}",
        "dtype = float32-le",
        "scale = 1",
    ]
    if extra_sidecar:
        sidecar.extend(extra_sidecar)
    _atomic_write_text(directory / f"{name}.f32.txt", "\n".join(sidecar) + "\n")
    return raw_path


def export_maps(
    result: AnalysisResult,
    directory: str | Path,
    preview: bool = False,
) -> dict[str, Path]:
    """Write the four analysis maps (plus mask) as raw float32 with sidecars.

    preview=True also writes 16-bit PGM previews: visibility maps 0..1 to
    0..65535 (clipped), phase maps -pi..pi to 0..65535, contrast and dc are
    auto-scaled with the scale recorded in the sidecar.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    maps = {
        "visibility": result.visibility_map,
        "contrast": result.contrast_map,
        "phase": result.phase_map,
        "dc": result.dc_map,
        "mask": result.mask.astype(np.float64),
    }
    written: dict[str, Path] = {}
    for name, data in maps.items():
        extra: list[str] = []
        if preview and name != "mask":
            if name == "visibility":
                scaled = np.clip(data, 0.0, 1.0) * 65535.0
            elif name == "phase":
                scaled = (data + np.pi) / (2.0 * np.pi) * 65535.0
            else:
                peak = float(data.max())
                preview_scale = 65535.0 / peak if peak > 0 else 1.0
                scaled = data * preview_scale
                extra.append(f"preview_scale = {_fmt(preview_scale)}")
            preview_u16 = np.clip(np.rint(scaled), 0, 65535).astype(np.uint16)
            preview_path = directory / f"{name}.pgm"
            _atomic_write_bytes(preview_path, _pgm_bytes(preview_u16))
            written[f"{name}_preview"] = preview_path
        written[name] = _write_raw_map(directory, name, data, extra)

    provenance = [
        f"format_version = {MAPS_FORMAT_VERSION}",
        f"toolkit_version = {__version__}",
        f"width = {result.visibility_map.shape[1]}",
        f"height = {result.visibility_map.shape[0]}",
        f"fringe_frequency = {_fmt(result.fringe_frequency)}",
        f"leakage_flag = {'true' if result.leakage_flag else 'false'}",
        f"masked_pixels = {int((~result.mask).sum())}",
        f"frequency_mode = {result.options.frequency_mode}",
        f"zero_pad_factor = {result.options.zero_pad_factor}",
        f"min_dc_threshold = {_fmt(result.options.min_dc_threshold)}",
    ]
    if result.options.fixed_frequency is not None:
        provenance.append(f"fixed_frequency = {_fmt(result.options.fixed_frequency)}")
    manifest = directory / MAPS_MANIFEST
    _atomic_write_text(manifest, "\n".join(provenance) + "\n")
    written["manifest"] = manifest
    return written


def write_scene(scene: ObjectScene, directory: str | Path) -> Path:
    """Persist a scene as raw float32 amplitude/phase plus a manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    h, w = scene.amplitude_map.shape
    _atomic_write_bytes(
        directory / "amplitude.f32", np.ascontiguousarray(scene.amplitude_map, "<f4").tobytes()
    )
    _atomic_write_bytes(
        directory / "phase.f32", np.ascontiguousarray(scene.phase_map, "<f4").tobytes()
    )
    lines = [
        f"format_version = {SCENE_FORMAT_VERSION}",
        f"width = {w}",
        f"height = {h}",
        f"mode = {scene.mode}",
        f"scene_pitch_um = {_fmt(scene.scene_pitch_um)}",
    ]
    manifest = directory / SCENE_MANIFEST
    _atomic_write_text(manifest, "\n".join(lines) + "\n")
    return manifest


def read_scene(path: str | Path) -> ObjectScene:
    """Load a scene directory (or its manifest path)."""
    path = Path(path)
    if path.is_dir():
        path = path / SCENE_MANIFEST
    if not path.is_file():
        raise StackFormatError(f"scene manifest not found: {path}")
    source = str(path)
    try:
        values = parse_key_values(path.read_text(encoding="utf-8"))
    except ValueError as err:
        raise StackFormatError(f"{source}: {err}") from None
    version = int(_require(values, "format_version", source))
    if version > SCENE_FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{source}: format_version {version} is newer than supported ({SCENE_FORMAT_VERSION})"
        )
    width = int(_require(values, "width", source))
    height = int(_require(values, "height", source))
    mode = _require(values, "mode", source)
    pitch = float(_require(values, "scene_pitch_um", source))
    shape = (height, width)
    expected = width * height * 4

    def load(name: str) -> np.ndarray:
        fpath = path.parent / name
        if not fpath.is_file():
            raise StackFormatError(f"{source}: missing scene file {name}")
        payload = fpath.read_bytes()
        if len(payload) != expected:
            raise StackFormatError(
                f"{source}: {name} holds {len(payload)} bytes, expected {expected}"
            )
        return np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float64)

    return ObjectScene(load("amplitude.f32"), load("phase.f32"), mode=mode, scene_pitch_um=pitch)
