"""Central finite-difference checks for every layer kind and the three network presets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gridsoccer import nn

STEP = 1e-5
TOLERANCE = 1e-4
# below this magnitude both gradients are treated as zero-scale (absolute 1e-10 agreement)
SCALE_FLOOR = 1e-6


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), SCALE_FLOOR)


@dataclass
class CheckResult:
    name: str
    layer_errors: dict[str, float]  # "index:kind" -> max relative error
    side_error: float = 0.0
    input_error: float = 0.0
    checked: int = 0

    @property
    def max_error(self) -> float:
        return max([*self.layer_errors.values(), self.side_error, self.input_error], default=0.0)

    @property
    def ok(self) -> bool:
        return self.max_error < TOLERANCE


def _sample(size: int, limit: int | None, rng: np.random.Generator) -> np.ndarray:
    if limit is None or size <= limit:
        return np.arange(size)
    return rng.choice(size, size=limit, replace=False)


def check_network(
    spec: nn.NetworkSpec,
    rng: np.random.Generator,
    name: str = "",
    batch: int = 2,
    per_tensor: int | None = None,
    h: float = STEP,
) -> CheckResult:
    """Compare analytic gradients of ``sum(R * net(x, side))`` with central differences.

    ``per_tensor`` limits how many entries of each tensor are perturbed.
    """
    params = nn.init_params(spec, rng)
    for b in params.arrays()[1::2]:
        b[...] = rng.normal(scale=0.1, size=b.shape)
    x = rng.normal(size=(batch, *spec.input_shape))
    side = rng.normal(size=(batch, spec.side_dim)) if spec.side_dim else None
    out, cache = nn.forward(params, x, side)
    proj = rng.normal(size=out.shape)
    grads, gx, gside = nn.backward(params, cache, proj)

    def loss() -> float:
        return float(np.sum(proj * nn.predict(params, x, side)))

    def fd(arr: np.ndarray, idx) -> float:
        old = arr[idx]
        arr[idx] = old + h
        up = loss()
        arr[idx] = old - h
        down = loss()
        arr[idx] = old
        return (up - down) / (2 * h)

    result = CheckResult(name or "net", {})
    for i, (layer, pair, gpair) in enumerate(zip(spec.layers, params.layers, grads)):
        if pair is None:
            continue
        worst = 0.0
        for arr, garr in zip(pair, gpair):
            for flat in _sample(arr.size, per_tensor, rng):
                idx = np.unravel_index(flat, arr.shape)
                worst = max(worst, relative_error(garr[idx], fd(arr, idx)))
                result.checked += 1
        result.layer_errors[f"{i}:{layer.kind}"] = worst
    for flat in _sample(x.size, per_tensor, rng):
        idx = np.unravel_index(flat, x.shape)
        result.input_error = max(result.input_error, relative_error(gx[idx], fd(x, idx)))
    if side is not None:
        for flat in _sample(side.size, per_tensor, rng):
            idx = np.unravel_index(flat, side.shape)
            result.side_error = max(result.side_error, relative_error(gside[idx], fd(side, idx)))
    return result


def random_spec(rng: np.random.Generator) -> nn.NetworkSpec:
    """Small random chain that exercises conv (with stride), dense, relu, concat and softmax."""
    H = int(rng.integers(5, 9))
    W = int(rng.integers(5, 10))
    C = int(rng.integers(1, 4))
    layers = [nn.Conv(int(rng.integers(2, 5)), int(rng.integers(1, 4)), int(rng.integers(1, 4)), 1), nn.ReLU()]
    h, w = H - layers[0].kh + 1, W - layers[0].kw + 1
    stride = int(rng.integers(1, 3))
    k = int(rng.integers(1, min(h, w, 3) + 1))
    layers += [nn.Conv(int(rng.integers(2, 5)), k, k, stride), nn.ReLU(), nn.Flatten()]
    if rng.random() < 0.7:
        layers.append(nn.ConcatSide(int(rng.integers(1, 5))))
    layers += [nn.Dense(int(rng.integers(3, 9))), nn.ReLU(), nn.Dense(int(rng.integers(2, 6)))]
    if rng.random() < 0.5:
        layers.append(nn.Softmax())
    return nn.NetworkSpec((H, W, C), tuple(layers))


def preset_specs() -> dict[str, nn.NetworkSpec]:
    from gridsoccer.coma import critic_spec, policy_spec
    from gridsoccer.dqn import dqn_spec

    return {
        "dqn(full,10x18)": dqn_spec((10, 18, 4), 11, "full"),
        "dqn(small,6x9)": dqn_spec((6, 9, 4), 10, "small"),
        "policy(6x9,n=2)": policy_spec(6, 9, 2),
        "critic(6x9,n=2)": critic_spec(6, 9, 2),
        "policy(10x18,n=3)": policy_spec(10, 18, 3),
        "critic(10x18,n=3)": critic_spec(10, 18, 3),
    }


def probe_specs() -> dict[str, nn.NetworkSpec]:
    """Parameter-free layer kinds in isolation; their error is the input-gradient error."""
    return {
        "relu": nn.NetworkSpec((7,), (nn.ReLU(),)),
        "softmax": nn.NetworkSpec((6,), (nn.Softmax(),)),
        "flatten": nn.NetworkSpec((3, 4, 2), (nn.Flatten(),)),
        "concat": nn.NetworkSpec((3, 2, 2), (nn.Flatten(), nn.ConcatSide(3))),
    }


def run_suite(seed: int = 0, configs: int = 20, preset_samples: int = 25) -> list[CheckResult]:
    """Random configurations (all parameters checked) plus sampled checks of the presets."""
    rng = np.random.default_rng(seed)
    results = []
    for kind, spec in probe_specs().items():
        r = check_network(spec, rng, name=f"probe-{kind}")
        r.layer_errors[f"0:{kind}"] = max(r.input_error, r.side_error)
        results.append(r)
    for i in range(configs):
        results.append(check_network(random_spec(rng), rng, name=f"random-{i}"))
    for name, spec in preset_specs().items():
        results.append(check_network(spec, rng, name=name, batch=2, per_tensor=preset_samples))
    return results


def format_report(results: list[CheckResult]) -> str:
    lines = []
    for r in results:
        parts = ", ".join(f"{k}={v:.2e}" for k, v in r.layer_errors.items())
        status = "ok" if r.ok else "FAIL"
        lines.append(
            f"{status:4s} {r.name:20s} max={r.max_error:.2e} input={r.input_error:.2e} "
            f"side={r.side_error:.2e} [{parts}]"
        )
    by_kind: dict[str, float] = {}
    for r in results:
        for key, v in r.layer_errors.items():
            kind = key.split(":")[1]
            by_kind[kind] = max(by_kind.get(kind, 0.0), v)
    for kind, v in sorted(by_kind.items()):
        lines.append(f"layer {kind}: max relative error {v:.2e}")
    return "\n".join(lines)
