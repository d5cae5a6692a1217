"""Pipeline configuration: defaults, config-file parsing, CLI precedence.

Precedence is CLI flag > config file > defaults. The defaults reproduce the
reference operating point: similarity threshold 0.7, stride 1, one layer,
contrast threshold 0, automatic filter size, automatic anomaly-threshold
calibration.
"""

from dataclasses import dataclass, fields, replace

from .errors import ParameterError

# Fields where the string "auto" (or None) means "resolve at run time".
_AUTO_FIELDS = {"filter_size", "anomaly_threshold", "sigma"}


@dataclass(frozen=True)
class PipelineConfig:
    filter_size: int | None = None        # None = estimate from the pattern period
    num_layers: int = 1
    stride: int = 1                       # patch step and inter-layer downsampling
    similarity_threshold: float = 0.7
    anomaly_threshold: float | None = None  # None = calibrate on the training image
    contrast_threshold: float = 0.0
    seed: int = 42
    equalize: bool = True
    aggregate: str = "max"                # deeper-layer response merge: max|mean
    sigma: float | None = None            # Gaussian spread; None = filter_size/6
    min_prominence: float = 0.05
    levels: int = 256                     # entropy quantization levels
    neighborhood: int = 3                 # local-mean window for 2D entropy
    struct_size: int = 3                  # opening structuring element
    map_threshold: float = 0.0            # probability cutoff for sweep masks
    jobs: int = 1

    def validate(self) -> "PipelineConfig":
        if self.filter_size is not None:
            if self.filter_size < 1 or self.filter_size % 2 == 0:
                raise ParameterError(f"filter_size must be odd and positive, got {self.filter_size}")
        if self.num_layers < 1:
            raise ParameterError(f"num_layers must be >= 1, got {self.num_layers}")
        if self.stride < 1:
            raise ParameterError(f"stride must be >= 1, got {self.stride}")
        if not (0.0 < self.similarity_threshold < 1.0):
            raise ParameterError(
                f"similarity_threshold must lie in (0,1), got {self.similarity_threshold}"
            )
        if self.anomaly_threshold is not None and not (0.0 <= self.anomaly_threshold <= 1.0):
            raise ParameterError(
                f"anomaly_threshold must lie in [0,1], got {self.anomaly_threshold}"
            )
        if self.contrast_threshold < 0:
            raise ParameterError(f"contrast_threshold must be >= 0, got {self.contrast_threshold}")
        if self.aggregate not in ("max", "mean"):
            raise ParameterError(f"aggregate must be 'max' or 'mean', got {self.aggregate!r}")
        if self.sigma is not None and not (self.sigma > 0):
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        if self.min_prominence < 0:
            raise ParameterError(f"min_prominence must be >= 0, got {self.min_prominence}")
        if not (2 <= self.levels <= 256):
            raise ParameterError(f"levels must lie in [2,256], got {self.levels}")
        if self.neighborhood < 1 or self.neighborhood % 2 == 0:
            raise ParameterError(f"neighborhood must be odd and positive, got {self.neighborhood}")
        if self.struct_size < 1 or self.struct_size % 2 == 0:
            raise ParameterError(f"struct_size must be odd and positive, got {self.struct_size}")
        if self.jobs < 1:
            raise ParameterError(f"jobs must be >= 1, got {self.jobs}")
        return self


def _parse_value(name: str, text: str):
    text = text.strip()
    if name in _AUTO_FIELDS and text.lower() in ("auto", "none"):
        return None
    if name == "equalize":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ParameterError(f"config: {name} expects a boolean, got {text!r}")
    if name == "aggregate":
        return text
    int_fields = {"filter_size", "num_layers", "stride", "seed", "levels",
                  "neighborhood", "struct_size", "jobs"}
    try:
        if name in int_fields:
            return int(text)
        return float(text)
    except ValueError:
        raise ParameterError(f"config: cannot parse {name}={text!r}") from None


def load_config_file(path: str) -> dict:
    """Parse a flat key=value config file; '#' starts a comment."""
    known = {f.name for f in fields(PipelineConfig)}
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ParameterError(f"{path}:{lineno}: expected key=value, got {raw.rstrip()!r}")
                key, value = line.split("=", 1)
                key = key.strip()
                if key not in known:
                    raise ParameterError(f"{path}:{lineno}: unknown config key {key!r}")
                out[key] = _parse_value(key, value)
    except OSError as exc:
        raise ParameterError(f"cannot read config file {path}: {exc}") from exc
    return out


def resolve_config(file_values: dict | None = None, cli_values: dict | None = None) -> PipelineConfig:
    """Merge defaults < config file < CLI.

    CLI entries with value None mean "flag not given"; the literal string
    "auto" requests run-time resolution for the fields that support it (so a
    CLI --filter-size auto can override an explicit config-file value).
    """
    merged = {}
    if file_values:
        merged.update(file_values)
    if cli_values:
        merged.update({k: v for k, v in cli_values.items() if v is not None})
    for name in list(merged):
        if name in _AUTO_FIELDS and isinstance(merged[name], str):
            if merged[name].lower() in ("auto", "none"):
                merged[name] = None
            else:
                raise ParameterError(f"{name}: expected a number or 'auto', got {merged[name]!r}")
    cfg = replace(PipelineConfig(), **merged)
    return cfg.validate()
