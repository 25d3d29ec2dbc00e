"""
File formats: splat PLY, COLMAP text cameras, per-block sub-scenes, synthetic-scene
configs and the partition manifest.
"""
import dataclasses
import io
import json
import os
from dataclasses import dataclass, field

import numpy as np
from plyfile import PlyData, PlyElement
from scipy.special import expit

from config_loader import config
from errors import (
    ColmapConsistencyError,
    ColmapFormatError,
    InvalidConfigError,
    InvalidCutsError,
    ManifestSchemaError,
    SplatFormatError,
    UnsupportedCameraModelError,
)
from scene_model import (
    CameraView,
    GaussianScene,
    GridCuts,
    SceneFrame,
    SyntheticSceneConfig,
    block_region,
    quaternion_to_rotation,
    rotation_to_quaternion,
)

SPLAT_PROPERTIES = ("x", "y", "z", "opacity", "scale_0", "scale_1", "scale_2",
                    "rot_0", "rot_1", "rot_2", "rot_3")

_PLY_SIZES = {
    "char": 1, "int8": 1, "uchar": 1, "uint8": 1,
    "short": 2, "int16": 2, "ushort": 2, "uint16": 2,
    "int": 4, "int32": 4, "uint": 4, "uint32": 4,
    "float": 4, "float32": 4, "double": 8, "float64": 8,
}


# ---------------------------------------------------------------------------
# Splat PLY
# ---------------------------------------------------------------------------

def _parse_ply_header(raw):
    """Validate the header and return (body offset, {element: (count, [(name, type)])}, order)."""
    end = raw.find(b"end_header\n")
    if not raw.startswith(b"ply\n"):
        raise SplatFormatError("Malformed PLY header: missing 'ply' magic", offset=0)
    if end < 0:
        raise SplatFormatError("Malformed PLY header: no end_header line", offset=len(raw))
    body = end + len(b"end_header\n")

    elements, order = {}, []
    offset = len(b"ply\n")
    current = None
    for line in raw[offset:end].split(b"\n"):
        tokens = line.decode("ascii", errors="replace").split()
        line_offset = offset
        offset += len(line) + 1
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "format":
            if len(tokens) != 3 or tokens[1] != "binary_little_endian":
                raise SplatFormatError(f"Unsupported PLY format: {' '.join(tokens[1:])}", offset=line_offset)
        elif tokens[0] == "element":
            if len(tokens) != 3 or not tokens[2].isdigit():
                raise SplatFormatError(f"Malformed element line: {line!r}", offset=line_offset)
            current = tokens[1]
            elements[current] = (int(tokens[2]), [])
            order.append(current)
        elif tokens[0] == "property":
            if current is None:
                raise SplatFormatError("Property declared before any element", offset=line_offset)
            if len(tokens) != 3 or tokens[1] not in _PLY_SIZES:
                raise SplatFormatError(f"Unsupported property declaration: {line!r}", offset=line_offset)
            elements[current][1].append((tokens[2], tokens[1]))
        else:
            raise SplatFormatError(f"Unknown header keyword: {tokens[0]}", offset=line_offset)
    return body, elements, order


def load_splat_ply(path):
    """
    Read a binary little-endian splat PLY into a GaussianScene (without a frame).

    Logit opacities (any value outside [0,1]) go through the logistic function, log
    scales (any negative value) through exp; quaternions are renormalized.
    """
    with open(path, "rb") as f:
        raw = f.read()

    body, elements, order = _parse_ply_header(raw)
    if "vertex" not in elements:
        raise SplatFormatError(f"{path}: no vertex element")
    count, properties = elements["vertex"]
    names = [name for name, _ in properties]
    for required in SPLAT_PROPERTIES:
        if required not in names:
            raise SplatFormatError(f"{path}: missing required property '{required}'")

    expected = sum(n * sum(_PLY_SIZES[t] for _, t in props) for n, props in elements.values())
    if len(raw) - body < expected:
        raise SplatFormatError(
            f"{path}: truncated payload, header declares {expected} data bytes but only "
            f"{len(raw) - body} are present", offset=len(raw))

    vertex = PlyData.read(io.BytesIO(raw))["vertex"]
    positions = np.stack([np.asarray(vertex[k], dtype=np.float64) for k in ("x", "y", "z")], axis=1)
    opacities = np.asarray(vertex["opacity"], dtype=np.float64)
    scales = np.stack([np.asarray(vertex[f"scale_{k}"], dtype=np.float64) for k in range(3)], axis=1)
    rotations = np.stack([np.asarray(vertex[f"rot_{k}"], dtype=np.float64) for k in range(4)], axis=1)

    if count and np.any((opacities < 0) | (opacities > 1)):
        opacities = expit(opacities)
    if count and np.any(scales < 0):
        scales = np.exp(scales)
    norms = np.linalg.norm(rotations, axis=1)
    if np.any(norms == 0):
        raise SplatFormatError(f"{path}: vertex {int(np.argmax(norms == 0))} has a zero quaternion")
    rotations = rotations / norms[:, None]

    return GaussianScene(positions, scales, rotations, opacities)


def save_splat_ply(scene, path, float_type=None):
    """Write scene as a binary little-endian PLY; opacity and scale are stored linear."""
    float_type = float_type or config.PLY_FLOAT_TYPE
    data = np.empty(len(scene), dtype=[(name, float_type) for name in SPLAT_PROPERTIES])
    for k, name in enumerate(("x", "y", "z")):
        data[name] = scene.positions[:, k]
    data["opacity"] = scene.opacities
    for k in range(3):
        data[f"scale_{k}"] = scene.scales[:, k]
    for k in range(4):
        data[f"rot_{k}"] = scene.rotations[:, k]

    element = PlyElement.describe(data, "vertex")
    try:
        with open(path, "wb") as f:
            PlyData([element], byte_order="<").write(f)
    except OSError as e:
        raise OSError(f"Could not write splat file {path}: {e}") from e


# ---------------------------------------------------------------------------
# COLMAP text
# ---------------------------------------------------------------------------

def _read_lines(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"COLMAP file {path} was not found.")
    with open(path, "r") as f:
        return [line.rstrip("\n") for line in f]


def read_cameras_text(path):
    """cameras.txt -> {camera_id: (model, width, height, params)}."""
    cameras = {}
    for number, line in enumerate(_read_lines(path), start=1):
        line = line.strip()
        if line == "" or line[0] == "#":
            continue
        toks = line.split()
        if len(toks) < 4:
            raise ColmapFormatError(f"{path}:{number}: expected 'ID MODEL W H params...'")
        camera_id, model = int(toks[0]), toks[1]
        params = [float(t) for t in toks[4:]]
        if model not in ("PINHOLE", "SIMPLE_PINHOLE"):
            raise UnsupportedCameraModelError(f"{path}:{number}: unsupported camera model {model}")
        expected = 4 if model == "PINHOLE" else 3
        if len(params) != expected:
            raise ColmapFormatError(f"{path}:{number}: {model} takes {expected} parameters, got {len(params)}")
        cameras[camera_id] = (model, int(toks[2]), int(toks[3]), params)
    return cameras


def read_images_text(path):
    """
    images.txt -> {image_id: (qvec, tvec, camera_id, name)}.

    Pose lines alternate with 2-D point lines; a point line may be empty, so blank lines
    are only skipped while a pose line is expected.
    """
    images = {}
    expect_pose = True
    for number, line in enumerate(_read_lines(path), start=1):
        stripped = line.strip()
        if stripped.startswith("#"):
            continue
        if not expect_pose:
            expect_pose = True
            continue
        if stripped == "":
            continue
        toks = stripped.split()
        if len(toks) < 9:
            raise ColmapFormatError(f"{path}:{number}: expected 'IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME'")
        image_id = int(toks[0])
        if image_id in images:
            raise ColmapConsistencyError(f"{path}:{number}: duplicate image id {image_id}")
        qvec = np.array([float(t) for t in toks[1:5]])
        tvec = np.array([float(t) for t in toks[5:8]])
        images[image_id] = (qvec, tvec, int(toks[8]), " ".join(toks[9:]))
        expect_pose = False
    return images


def load_colmap_cameras(directory, z_near=None, z_far=None):
    """One CameraView per registered image, ordered by image id (which becomes the view id)."""
    z_near = config.Z_NEAR if z_near is None else z_near
    z_far = config.Z_FAR if z_far is None else z_far
    intrinsics = read_cameras_text(os.path.join(directory, "cameras.txt"))
    images = read_images_text(os.path.join(directory, "images.txt"))

    views = []
    for image_id in sorted(images):
        qvec, tvec, camera_id, name = images[image_id]
        if camera_id not in intrinsics:
            raise ColmapConsistencyError(f"Image {image_id} ({name}) references unknown camera {camera_id}")
        model, width, height, params = intrinsics[camera_id]
        if model == "SIMPLE_PINHOLE":
            fx = fy = params[0]
            cx, cy = params[1], params[2]
        else:
            fx, fy, cx, cy = params
        rotation = quaternion_to_rotation(qvec / np.linalg.norm(qvec))[0]
        views.append(CameraView(image_id, fx, fy, cx, cy, width, height, rotation, tvec, z_near, z_far))
    return views


def write_colmap_cameras(cameras, directory):
    """Write cameras as PINHOLE cameras.txt / images.txt (one intrinsic entry per view)."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "cameras.txt"), "w") as f:
        f.write("# Camera list with one line of data per camera:\n")
        f.write("#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n")
        for cam in cameras:
            f.write(f"{cam.id} PINHOLE {cam.width} {cam.height} {cam.fx!r} {cam.fy!r} {cam.cx!r} {cam.cy!r}\n")
    with open(os.path.join(directory, "images.txt"), "w") as f:
        f.write("# Image list with two lines of data per image:\n")
        f.write("#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n")
        f.write("#   POINTS2D[] as (X, Y, POINT3D_ID)\n")
        for cam in cameras:
            q = [float(x) for x in rotation_to_quaternion(cam.rotation)]
            t = [float(x) for x in cam.translation]
            values = " ".join(repr(x) for x in q + t)
            f.write(f"{cam.id} {values} {cam.id} view_{cam.id:05d}.png\n\n")


# ---------------------------------------------------------------------------
# Synthetic scene configs
# ---------------------------------------------------------------------------

def load_synthetic_config(path):
    with open(path, "r") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise InvalidConfigError(f"{path}: not valid JSON ({e})") from e
    known = {f.name for f in dataclasses.fields(SyntheticSceneConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise InvalidConfigError(f"{path}: unknown synthetic scene keys {unknown}")
    cfg = SyntheticSceneConfig(**data)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Per-block sub-scenes
# ---------------------------------------------------------------------------

def block_sidecar_path(path):
    return os.path.splitext(path)[0] + ".json"


def save_block(sub, path):
    """PLY of the sub-scene plus a JSON sidecar with the per-Gaussian bookkeeping."""
    save_splat_ply(sub.gaussians, path)
    frame = sub.gaussians.frame
    sidecar = {
        "block_id": int(sub.block_id),
        "origin_index": [int(i) for i in sub.origin_index],
        "in_block": [bool(x) for x in sub.in_block],
        "densify_eligible": [bool(x) for x in sub.densify_eligible],
        "parent_eligible": [bool(x) for x in sub.parent_eligible],
        "cell": {"lo": [float(x) for x in sub.cell.lo], "hi": [float(x) for x in sub.cell.hi],
                 "row": int(sub.cell.row), "col": int(sub.cell.col)},
        "frame": frame.to_dict() if frame is not None else None,
    }
    with open(block_sidecar_path(path), "w") as f:
        json.dump(sidecar, f, sort_keys=True, indent=2)
        f.write("\n")


def load_block(path):
    from block_pipeline import BlockSubScene
    from scene_model import BlockRegion

    scene = load_splat_ply(path)
    sidecar_path = block_sidecar_path(path)
    if not os.path.exists(sidecar_path):
        raise FileNotFoundError(f"Block sidecar {sidecar_path} was not found.")
    with open(sidecar_path, "r") as f:
        sidecar = json.load(f)
    if sidecar.get("frame") is not None:
        scene = scene.with_frame(SceneFrame.from_dict(sidecar["frame"]))
    cell = sidecar["cell"]
    return BlockSubScene(
        block_id=sidecar["block_id"],
        gaussians=scene,
        origin_index=np.array(sidecar["origin_index"], dtype=np.int64),
        in_block=np.array(sidecar["in_block"], dtype=bool),
        densify_eligible=np.array(sidecar["densify_eligible"], dtype=bool),
        parent_eligible=np.array(sidecar["parent_eligible"], dtype=bool),
        cell=BlockRegion(np.array(cell["lo"]), np.array(cell["hi"]), sidecar["block_id"], cell["row"], cell["col"]),
    )


# ---------------------------------------------------------------------------
# Partition manifest
# ---------------------------------------------------------------------------

@dataclass
class BlockRecord:
    block_id: int
    lo: list
    hi: list
    camera_ids: list
    g_blk: int
    g_vis: int
    g_avgvis: float
    area: float
    camera_count: int


@dataclass
class PartitionManifest:
    m: int
    n: int
    v: list
    h: list
    delta: list
    tau: float
    blocks: list
    provenance: dict = field(default_factory=dict)
    version: int = config.MANIFEST_VERSION

    @property
    def cuts(self):
        return GridCuts(self.m, self.n, np.array(self.v), np.array(self.h))

    @property
    def frame(self):
        data = self.provenance.get("frame")
        return SceneFrame.from_dict(data) if data else None

    @property
    def assignment(self):
        return {record.block_id: list(record.camera_ids) for record in self.blocks}

    def block(self, block_id):
        for record in self.blocks:
            if record.block_id == block_id:
                return record
        raise ManifestSchemaError(f"Manifest has no block {block_id}", self.version)

    def to_dict(self):
        return {
            "version": self.version,
            "grid": [self.m, self.n],
            "cuts": {"v": list(self.v), "h": list(self.h)},
            "delta": list(self.delta),
            "tau": self.tau,
            "blocks": [dataclasses.asdict(record) for record in self.blocks],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            m, n = data["grid"]
            return cls(
                m=int(m), n=int(n),
                v=[float(x) for x in data["cuts"]["v"]],
                h=[float(x) for x in data["cuts"]["h"]],
                delta=[float(x) for x in data["delta"]],
                tau=float(data["tau"]),
                blocks=[BlockRecord(**record) for record in data["blocks"]],
                provenance=data.get("provenance", {}),
                version=data["version"],
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ManifestSchemaError(f"Malformed manifest: {e}", data.get("version") if isinstance(data, dict) else None) from e


def build_manifest(cuts, delta, tau, stats, assignment, provenance):
    """Manifest for a final partition, with one record per block in block order."""
    blocks = []
    for s in stats:
        region = block_region(cuts, *cuts.block_position(s.block_id), delta)
        blocks.append(BlockRecord(
            block_id=int(s.block_id),
            lo=[float(x) for x in region.lo],
            hi=[float(x) for x in region.hi],
            camera_ids=sorted(int(c) for c in assignment[s.block_id]),
            g_blk=int(s.g_blk),
            g_vis=int(s.g_vis),
            g_avgvis=float(s.g_avgvis),
            area=float(s.area),
            camera_count=int(s.camera_count),
        ))
    return PartitionManifest(
        m=cuts.m, n=cuts.n,
        v=[float(x) for x in cuts.v], h=[float(x) for x in cuts.h],
        delta=[float(d) for d in delta], tau=float(tau),
        blocks=blocks, provenance=provenance,
    )


def validate_manifest(manifest):
    version = manifest.version
    if version != config.MANIFEST_VERSION:
        raise ManifestSchemaError(f"Unsupported manifest version (expected {config.MANIFEST_VERSION})", version)
    if manifest.m < 1 or manifest.n < 1:
        raise ManifestSchemaError(f"Grid must be at least 1x1, got {manifest.m}x{manifest.n}", version)
    try:
        cuts = manifest.cuts
    except InvalidCutsError as e:
        raise ManifestSchemaError(f"Invalid cuts: {e}", version) from e
    if len(manifest.delta) != 2 or min(manifest.delta) < 0:
        raise ManifestSchemaError("delta must hold two non-negative values", version)
    if len(manifest.blocks) != cuts.block_count:
        raise ManifestSchemaError(
            f"A {manifest.m}x{manifest.n} grid needs {cuts.block_count} block records, got {len(manifest.blocks)}", version)
    for expected_id, record in enumerate(manifest.blocks, start=1):
        if record.block_id != expected_id:
            raise ManifestSchemaError(f"Block records out of order at block {record.block_id}", version)
        ids = list(record.camera_ids)
        if ids != sorted(set(ids)):
            raise ManifestSchemaError(f"Block {record.block_id}: camera_ids must be sorted and unique", version)
        region = block_region(cuts, *cuts.block_position(record.block_id), manifest.delta)
        if not (np.allclose(region.lo, record.lo, rtol=0, atol=1e-12)
                and np.allclose(region.hi, record.hi, rtol=0, atol=1e-12)):
            raise ManifestSchemaError(f"Block {record.block_id}: region bounds disagree with cuts and delta", version)
    history = manifest.provenance.get("objective_history", [])
    iterations = manifest.provenance.get("iterations")
    if iterations is not None and len(history) > iterations:
        raise ManifestSchemaError(
            f"Objective history holds {len(history)} values for {iterations} iterations", version)


def write_manifest(manifest, path):
    """Validated JSON with sorted keys; identical manifests give identical bytes."""
    validate_manifest(manifest)
    with open(path, "w") as f:
        json.dump(manifest.to_dict(), f, sort_keys=True, indent=2)
        f.write("\n")


def load_manifest(path):
    with open(path, "r") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ManifestSchemaError(f"{path}: not valid JSON ({e})") from e
    if not isinstance(data, dict):
        raise ManifestSchemaError(f"{path}: manifest must be a JSON object")
    manifest = PartitionManifest.from_dict(data)
    validate_manifest(manifest)
    return manifest
