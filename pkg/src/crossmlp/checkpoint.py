"""Deterministic checkpoint archive (tag: crossmlp-ckpt-v1).

A checkpoint is a ZIP holding one JSON manifest plus one .npy entry per
tensor. Entries are stored uncompressed in sorted order with a fixed
timestamp, so saving the same state twice produces byte-identical files —
which is what the end-to-end determinism check diffs against.
"""

import io
import json
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import torch

from .config import RunConfig, config_dict, config_from_dict
from .errors import DataError

CHECKPOINT_TAG = "crossmlp-ckpt-v1"
_MANIFEST_NAME = "manifest.json"
_FIXED_DATE = (1980, 1, 1, 0, 0, 0)


@dataclass
class CheckpointData:
    step: int
    epoch: int
    config: RunConfig
    tensors: Dict[str, np.ndarray]
    optimizers: dict
    extra: dict


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.save(buf, arr, allow_pickle=False)
    return buf.getvalue()


def _write_entry(zf: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_FIXED_DATE)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o600 << 16
    zf.writestr(info, payload)


def save_checkpoint(path, *, step: int, epoch: int, config: RunConfig,
                    modules: Dict[str, torch.nn.Module],
                    optimizers: Optional[Dict[str, torch.optim.Optimizer]] = None,
                    include_rng: bool = True, extra: Optional[dict] = None) -> None:
    """Write model/optimizer/RNG state; `modules` keys become name prefixes."""
    tensors: Dict[str, np.ndarray] = {}
    for prefix, module in modules.items():
        for name, t in module.state_dict().items():
            tensors[f"{prefix}/{name}"] = t.detach().cpu().numpy()

    opt_meta: dict = {}
    if optimizers:
        for oname, opt in optimizers.items():
            sd = opt.state_dict()
            state_keys: dict = {}
            for pid, entry in sd["state"].items():
                keys = {}
                for k, v in entry.items():
                    if torch.is_tensor(v):
                        tensors[f"opt/{oname}/{pid}/{k}"] = v.detach().cpu().numpy()
                        keys[k] = "__tensor__"
                    else:
                        keys[k] = v
                state_keys[str(pid)] = keys
            opt_meta[oname] = {"param_groups": sd["param_groups"],
                               "state_keys": state_keys}

    if include_rng:
        tensors["rng/torch"] = torch.get_rng_state().numpy()

    manifest = {
        "format": CHECKPOINT_TAG,
        "step": step,
        "epoch": epoch,
        "config": config_dict(config),
        "optimizers": opt_meta,
        "extra": extra or {},
        "tensors": {k: {"dtype": str(v.dtype), "shape": list(v.shape)}
                    for k, v in sorted(tensors.items())},
    }
    payload = json.dumps(manifest, sort_keys=True, indent=2).encode()

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        _write_entry(zf, _MANIFEST_NAME, payload)
        for name in sorted(tensors):
            _write_entry(zf, f"tensors/{name}.npy", _npy_bytes(tensors[name]))


def load_checkpoint(path) -> CheckpointData:
    path = Path(path)
    try:
        with zipfile.ZipFile(path) as zf:
            manifest = json.loads(zf.read(_MANIFEST_NAME).decode())
            if manifest.get("format") != CHECKPOINT_TAG:
                raise DataError(
                    f"{path}: format tag {manifest.get('format')!r}, "
                    f"expected {CHECKPOINT_TAG!r}"
                )
            tensors = {}
            for name in manifest["tensors"]:
                raw = zf.read(f"tensors/{name}.npy")
                tensors[name] = np.load(io.BytesIO(raw), allow_pickle=False)
    except (zipfile.BadZipFile, KeyError) as exc:
        raise DataError(f"{path}: not a readable checkpoint ({exc})") from exc
    return CheckpointData(
        step=manifest["step"],
        epoch=manifest["epoch"],
        config=config_from_dict(manifest["config"]),
        tensors=tensors,
        optimizers=manifest["optimizers"],
        extra=manifest["extra"],
    )


def module_state(ckpt: CheckpointData, prefix: str) -> dict:
    """Extract one module's state dict (torch tensors) from a checkpoint."""
    state = {}
    marker = prefix + "/"
    for name, arr in ckpt.tensors.items():
        if name.startswith(marker):
            state[name[len(marker):]] = torch.from_numpy(arr.copy())
    if not state:
        raise DataError(f"checkpoint holds no tensors under {prefix!r}")
    return state


def restore_modules(ckpt: CheckpointData, modules: Dict[str, torch.nn.Module]) -> None:
    for prefix, module in modules.items():
        module.load_state_dict(module_state(ckpt, prefix))


def restore_optimizers(ckpt: CheckpointData,
                       optimizers: Dict[str, torch.optim.Optimizer]) -> None:
    for oname, opt in optimizers.items():
        meta = ckpt.optimizers.get(oname)
        if meta is None:
            raise DataError(f"checkpoint holds no optimizer state for {oname!r}")
        state = {}
        for pid_str, keys in meta["state_keys"].items():
            entry = {}
            for k, v in keys.items():
                if v == "__tensor__":
                    entry[k] = torch.from_numpy(
                        ckpt.tensors[f"opt/{oname}/{pid_str}/{k}"].copy()
                    )
                else:
                    entry[k] = v
            state[int(pid_str)] = entry
        opt.load_state_dict({"param_groups": meta["param_groups"], "state": state})


def restore_rng(ckpt: CheckpointData) -> None:
    if "rng/torch" in ckpt.tensors:
        torch.set_rng_state(torch.from_numpy(ckpt.tensors["rng/torch"].copy()))
