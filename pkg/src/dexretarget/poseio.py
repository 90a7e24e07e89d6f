"""Hand-pose stream ingestion and wrist-transform solving.

Stream files are line-delimited JSON (`dexstream/1`): a header object with
`format` and `rate_hz`, then one record per frame with fields `t`, `pose`
(45 angles), `shape` (10 coefficients) and optionally `kp` (named camera-frame
points). Files written by write_stream are canonical: reading and re-writing
them reproduces the bytes exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, StreamFormatError
from .handgen import HandShapeParams
from .transforms import RigidTransform

FORMAT_VERSION = "dexstream/1"
POSE_DIM = 45
SHAPE_DIM = 10
VARIANCE_FLOOR = 1e-6


@dataclass(frozen=True)
class HandPoseFrame:
    """One timestamped detector sample."""

    timestamp: float
    pose: np.ndarray                     # 45 angles, customized-hand order
    shape: HandShapeParams
    observed_keypoints: dict[str, np.ndarray] | None = None

    def __post_init__(self):
        pose = np.asarray(self.pose, dtype=float)
        if pose.shape != (POSE_DIM,) or not np.all(np.isfinite(pose)):
            raise StreamFormatError(f"pose must be {POSE_DIM} finite angles")
        object.__setattr__(self, "pose", pose)
        if self.observed_keypoints is not None:
            kp = {k: np.asarray(v, dtype=float) for k, v in self.observed_keypoints.items()}
            for name, v in kp.items():
                if v.shape != (3,) or not np.all(np.isfinite(v)):
                    raise StreamFormatError(f"keypoint '{name}' must be a finite 3-vector")
            object.__setattr__(self, "observed_keypoints", kp)


@dataclass(frozen=True)
class HandPoseStream:
    frames: tuple[HandPoseFrame, ...]
    rate_hz: float
    s0: HandShapeParams | None = None
    sigma: np.ndarray | None = None      # 10 positive diagonal entries
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.frames) < 2:
            raise StreamFormatError("stream needs at least 2 frames")
        if self.rate_hz <= 0:
            raise StreamFormatError("rate_hz must be positive")
        for i in range(1, len(self.frames)):
            if self.frames[i].timestamp <= self.frames[i - 1].timestamp:
                raise StreamFormatError(f"timestamps not strictly increasing at frame {i}")
        if self.sigma is not None:
            sigma = np.asarray(self.sigma, dtype=float)
            if sigma.shape != (SHAPE_DIM,) or not np.all(sigma > 0):
                raise StreamFormatError("sigma must be 10 positive entries")
            object.__setattr__(self, "sigma", sigma)

    @property
    def dt(self) -> float:
        return 1.0 / self.rate_hz

    def pose_matrix(self) -> np.ndarray:
        return np.stack([f.pose for f in self.frames])


def calibrate(frames) -> tuple[HandShapeParams, np.ndarray]:
    """Per-coordinate mean and floored population variance of frame shapes.

    Pass the first K frames of a stream; K must be at least 10.
    """
    frames = list(frames)
    if len(frames) < 10:
        raise DataError(f"calibration needs at least 10 frames, got {len(frames)}")
    shapes = np.stack([f.shape.beta for f in frames])
    s0 = shapes.mean(axis=0)
    var = shapes.var(axis=0)  # population variance (n divisor)
    return HandShapeParams(s0), np.maximum(var, VARIANCE_FLOOR)


# ---------------------------------------------------------------------------
# Stream file I/O
# ---------------------------------------------------------------------------

def _dump_line(obj) -> str:
    return json.dumps(obj, separators=(", ", ": "))


def read_stream(path: str | Path) -> HandPoseStream:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise StreamFormatError("empty stream file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise StreamFormatError(f"bad stream header: {exc}") from exc
    if header.get("format") != FORMAT_VERSION:
        raise StreamFormatError(
            f"unsupported stream format {header.get('format')!r}, expected {FORMAT_VERSION!r}"
        )
    if "rate_hz" not in header:
        raise StreamFormatError("stream header missing rate_hz")

    frames = []
    for i, line in enumerate(lines[1:]):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise StreamFormatError(f"bad record at frame {i}: {exc}") from exc
        try:
            kp = rec.get("kp")
            frames.append(
                HandPoseFrame(
                    timestamp=float(rec["t"]),
                    pose=np.asarray(rec["pose"], dtype=float),
                    shape=HandShapeParams(np.asarray(rec["shape"], dtype=float)),
                    observed_keypoints={k: np.asarray(v, dtype=float) for k, v in kp.items()} if kp else None,
                )
            )
        except KeyError as exc:
            raise StreamFormatError(f"frame {i} missing field {exc}") from exc
        except DataError as exc:
            raise StreamFormatError(f"frame {i}: {exc}") from exc

    if len(frames) >= 2 and any(
        frames[i].timestamp <= frames[i - 1].timestamp for i in range(1, len(frames))
    ):
        bad = next(i for i in range(1, len(frames)) if frames[i].timestamp <= frames[i - 1].timestamp)
        raise StreamFormatError(f"timestamps not strictly increasing at frame {bad}")

    s0 = header.get("s0")
    sigma = header.get("sigma")
    metadata = {k: v for k, v in header.items() if k not in ("format", "rate_hz", "s0", "sigma")}
    return HandPoseStream(
        frames=tuple(frames),
        rate_hz=float(header["rate_hz"]),
        s0=HandShapeParams(np.asarray(s0, dtype=float)) if s0 is not None else None,
        sigma=np.asarray(sigma, dtype=float) if sigma is not None else None,
        metadata=metadata,
    )


def stream_to_text(stream: HandPoseStream) -> str:
    """Canonical serialization; read + re-serialize is byte-stable."""
    header = {"format": FORMAT_VERSION, "rate_hz": stream.rate_hz}
    if stream.s0 is not None:
        header["s0"] = [float(v) for v in stream.s0.beta]
    if stream.sigma is not None:
        header["sigma"] = [float(v) for v in stream.sigma]
    header.update(stream.metadata)
    out = [_dump_line(header)]
    for frame in stream.frames:
        rec = {
            "t": float(frame.timestamp),
            "pose": [float(v) for v in frame.pose],
            "shape": [float(v) for v in frame.shape.beta],
        }
        if frame.observed_keypoints is not None:
            rec["kp"] = {k: [float(x) for x in v] for k, v in sorted(frame.observed_keypoints.items())}
        out.append(_dump_line(rec))
    return "\n".join(out) + "\n"


def write_stream(stream: HandPoseStream, path: str | Path):
    Path(path).write_text(stream_to_text(stream))


# ---------------------------------------------------------------------------
# Wrist solving: 3D-3D rigid alignment (orthogonal Procrustes)
# ---------------------------------------------------------------------------

def solve_wrist(
    canonical_keypoints: dict[str, np.ndarray],
    observed_keypoints: dict[str, np.ndarray],
    conditioning_tol: float = 1e-8,
) -> tuple[RigidTransform, float]:
    """Least-squares rigid transform T with T(canonical) ~ observed.

    Correspondences are matched by shared name; at least 3 non-collinear
    points are required. Returns the proper-rotation transform and the RMS
    residual in meters.
    """
    names = sorted(set(canonical_keypoints) & set(observed_keypoints))
    if len(names) < 3:
        raise DataError(f"need at least 3 shared keypoints, got {len(names)}")
    src = np.stack([np.asarray(canonical_keypoints[n], dtype=float) for n in names])
    dst = np.stack([np.asarray(observed_keypoints[n], dtype=float) for n in names])

    src_mean = src.mean(axis=0)
    dst_mean = dst.mean(axis=0)
    cross = (src - src_mean).T @ (dst - dst_mean)
    u, s, vt = np.linalg.svd(cross)
    # Points spanning a plane give rank 2; a line gives rank 1, which leaves
    # the rotation about that line free.
    if s[1] <= conditioning_tol * max(s[0], 1e-300):
        raise DataError("keypoint configuration is collinear; wrist rotation is ambiguous")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    trans = dst_mean - rot @ src_mean
    transform = RigidTransform.from_matrix(rot, trans)
    residual = float(np.sqrt(np.mean(np.sum((src @ rot.T + trans - dst) ** 2, axis=1))))
    return transform, residual
