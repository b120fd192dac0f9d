"""Run configuration, ablation variants and config-file handling.

Config files are YAML (JSON is accepted too) mirroring :meth:`RunConfig.to_dict`.
Any key can be overridden from the command line as ``dotted.key=value``.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import yaml

from .augment import CutMixParams, SignalAugConfig
from .dsp import DspConfig
from .features import FeatureOrder, TrimConfig
from .model import TrainConfig

VARIANT_IDS = ("A", "B", "C", "D", "E", "F")

VARIANT_SWITCHES = {
    "A": dict(batch_norm=True, cutmix=True, signal_aug=True, batch_padding=True),
    "B": dict(batch_norm=False, cutmix=True, signal_aug=True, batch_padding=True),
    "C": dict(batch_norm=True, cutmix=False, signal_aug=True, batch_padding=True),
    "D": dict(batch_norm=True, cutmix=True, signal_aug=False, batch_padding=True),
    "E": dict(batch_norm=True, cutmix=False, signal_aug=False, batch_padding=True),
    "F": dict(batch_norm=True, cutmix=True, signal_aug=True, batch_padding=False),
}

VARIANT_DESCRIPTIONS = {
    "A": "complete model",
    "B": "without batch normalization",
    "C": "without CutMix",
    "D": "without signal-level augmentation",
    "E": "without signal-level and CutMix augmentation",
    "F": "without mini-batch padding",
}

# reference test accuracies (%) of the six variants
REFERENCE_ACCURACY = {"A": 87.73, "B": 83.96, "C": 83.02, "D": 81.13, "E": 76.42, "F": 69.81}


@dataclass(frozen=True)
class AblationVariant:
    id: str
    batch_norm: bool
    cutmix: bool
    signal_aug: bool
    batch_padding: bool

    @classmethod
    def get(cls, variant_id: str) -> "AblationVariant":
        key = variant_id.strip().upper()
        if key not in VARIANT_SWITCHES:
            raise ValueError(f"unknown variant {variant_id!r}; expected one of {', '.join(VARIANT_IDS)}")
        return cls(key, **VARIANT_SWITCHES[key])


@dataclass(frozen=True)
class RunConfig:
    dsp: DspConfig = field(default_factory=DspConfig)
    trim: TrimConfig = field(default_factory=TrimConfig)
    order: FeatureOrder = field(default_factory=FeatureOrder)
    signal_aug: SignalAugConfig = field(default_factory=SignalAugConfig)
    signal_aug_enabled: bool = True
    cutmix: CutMixParams = field(default_factory=CutMixParams)
    cutmix_enabled: bool = True
    padding: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)
    split_seed: int = 0
    test_speakers: tuple[str, ...] = ()
    variant: str = "A"
    save_checkpoint: bool = True

    def with_variant(self, variant_id: str) -> "RunConfig":
        v = AblationVariant.get(variant_id)
        return dataclasses.replace(
            self,
            variant=v.id,
            signal_aug_enabled=v.signal_aug,
            cutmix_enabled=v.cutmix,
            padding=v.batch_padding,
            train=dataclasses.replace(self.train, use_batch_norm=v.batch_norm),
        )

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, train=dataclasses.replace(self.train, seed=seed))

    def to_dict(self) -> dict[str, Any]:
        return {
            "variant": self.variant,
            "dsp": dataclasses.asdict(self.dsp),
            "trim": dataclasses.asdict(self.trim),
            "features": {"order": list(self.order.permutation)},
            "augment": {
                "signal": {"enabled": self.signal_aug_enabled, **_lists(dataclasses.asdict(self.signal_aug))},
                "cutmix": {"enabled": self.cutmix_enabled, **dataclasses.asdict(self.cutmix)},
            },
            "data": {
                "padding": self.padding,
                "split_seed": self.split_seed,
                "test_speakers": list(self.test_speakers),
            },
            "train": {**_lists(dataclasses.asdict(self.train)), "save_checkpoint": self.save_checkpoint},
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "RunConfig":
        raw = copy.deepcopy(dict(raw))
        unknown = set(raw) - {"variant", "dsp", "trim", "features", "augment", "data", "train"}
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        augment = raw.get("augment", {})
        signal = dict(augment.get("signal", {}))
        cut = dict(augment.get("cutmix", {}))
        data = raw.get("data", {})
        train = dict(raw.get("train", {}))
        base = cls()
        order = raw.get("features", {}).get("order")
        save_checkpoint = train.pop("save_checkpoint", base.save_checkpoint)
        return cls(
            dsp=_build(DspConfig, raw.get("dsp", {})),
            trim=_build(TrimConfig, raw.get("trim", {})),
            order=FeatureOrder(tuple(order)) if order else base.order,
            signal_aug=_build(SignalAugConfig, {k: v for k, v in signal.items() if k != "enabled"}),
            signal_aug_enabled=bool(signal.get("enabled", base.signal_aug_enabled)),
            cutmix=_build(CutMixParams, {k: v for k, v in cut.items() if k != "enabled"}),
            cutmix_enabled=bool(cut.get("enabled", base.cutmix_enabled)),
            padding=bool(data.get("padding", base.padding)),
            train=_build(TrainConfig, train),
            split_seed=int(data.get("split_seed", base.split_seed)),
            test_speakers=tuple(str(s) for s in data.get("test_speakers", ()) or ()),
            variant=str(raw.get("variant", base.variant)).upper(),
            save_checkpoint=bool(save_checkpoint),
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _lists(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _build(kind, values: Mapping[str, Any]):
    names = {f.name for f in dataclasses.fields(kind)}
    unknown = set(values) - names
    if unknown:
        raise ValueError(f"unknown {kind.__name__} keys: {sorted(unknown)}")
    values = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
    return kind(**values)


def apply_overrides(raw: Mapping[str, Any], overrides: Iterable[str]) -> dict[str, Any]:
    """Apply ``a.b.c=value`` strings; values are parsed as YAML scalars/lists."""
    out = copy.deepcopy(dict(raw))
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"override {item!r} is not of the form key=value")
        parts = key.strip().split(".")
        node = out
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValueError(f"override {item!r} descends into a non-section")
        node[parts[-1]] = yaml.safe_load(value)
    return out


def load_config(path=None, overrides: Iterable[str] = ()) -> RunConfig:
    raw = RunConfig().to_dict()
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text()) or {}
        raw = _merge(raw, loaded)
    return RunConfig.from_dict(apply_overrides(raw, overrides))


def _merge(base: dict, extra: Mapping) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def dump_config(cfg: RunConfig, path) -> Path:
    path = Path(path)
    path.write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
    return path
