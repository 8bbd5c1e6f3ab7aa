"""Named trunks (LeNet4, VGG8) and the parameter accounting report."""

from __future__ import annotations

from .layers import LayerSpec, conv2d, dense, flatten, maxpool, relu
from .model import INPUT_SHAPE, Model

EMBEDDING_DIM = 128


def lenet4() -> list[LayerSpec]:
    # classic LeNet border handling: only the first conv is zero-padded
    return [
        conv2d(32, 5, padding=2), relu(), maxpool(2),
        conv2d(64, 5), relu(), maxpool(2),
        conv2d(32, 3), relu(),
        flatten(),
        dense(EMBEDDING_DIM),
    ]


def vgg8() -> list[LayerSpec]:
    specs = []
    for channels, reps in ((64, 2), (128, 2), (128, 3)):
        for _ in range(reps):
            specs += [conv2d(channels, 3, padding=1), relu()]
        specs.append(maxpool(2))
    return specs + [flatten(), dense(EMBEDDING_DIM)]


ARCHITECTURES = {"lenet4": lenet4, "vgg8": vgg8}

# per-block parameter counts as printed in the architecture table
PAPER_COUNTS = {
    "lenet4": {"blocks": [960, 51_500, 51_400, 82_500], "total": 186_360},
    "vgg8": {"blocks": [39_200, 222_500, 444_300, 327_800], "total": 1_033_800},
}
PAPER_BLOCKS = {"lenet4": [[0], [1], [2], [3]], "vgg8": [[0, 1], [2, 3], [4, 5, 6], [7]]}


def build_model(arch="lenet4", seed=0, input_shape=INPUT_SHAPE, dtype=None) -> Model:
    """Build a trunk from a named architecture or an explicit ``LayerSpec`` list."""
    if isinstance(arch, str):
        try:
            specs = ARCHITECTURES[arch.lower()]()
        except KeyError:
            raise ValueError(f"unknown architecture {arch!r}; choose from {sorted(ARCHITECTURES)}") from None
    else:
        specs = [LayerSpec(**vars(s)) for s in arch]
    kwargs = {} if dtype is None else {"dtype": dtype}
    return Model(specs, input_shape=input_shape, seed=seed, **kwargs)


def parameter_report(arch="lenet4", head_params=EMBEDDING_DIM + 1) -> dict:
    """Per-layer parameter derivation compared against the published table.

    ``head_params`` counts the probability head (dense over |phi1 - phi2|)
    that the cross-entropy and joint modes add on top of the trunk.
    """
    model = build_model(arch)
    rows = []
    for layer in model.weight_layers:
        spec = layer.spec
        if spec.kind == "conv2d":
            c = layer.in_shape[0]
            kh, kw = spec.kernel
            formula = f"{kh}*{kw}*{c}*{spec.out_channels} + {spec.out_channels}"
        else:
            formula = f"{layer.in_shape[0]}*{spec.units} + {spec.units}"
        rows.append({
            "kind": spec.kind,
            "in_shape": list(layer.in_shape),
            "out_shape": list(layer.out_shape),
            "formula": formula,
            "params": layer.param_count(),
        })
    report = {"arch": arch, "layers": rows, "trunk_total": model.param_count(),
              "head_params": head_params}
    report["total"] = report["trunk_total"] + head_params
    paper = PAPER_COUNTS.get(arch)
    if paper:
        blocks = []
        for idx, printed in zip(PAPER_BLOCKS[arch], paper["blocks"]):
            ours = sum(rows[i]["params"] for i in idx)
            blocks.append({"layers": idx, "ours": ours, "published": printed,
                           "delta": ours - printed})
        report["blocks"] = blocks
        report["published_total"] = paper["total"]
        # the published total is the sum of the trunk blocks
        report["relative_delta"] = (report["trunk_total"] - paper["total"]) / paper["total"]
    return report


def format_report(report: dict) -> str:
    lines = [f"# Parameter accounting: {report['arch']}", "",
             "| # | kind | input | output | derivation | params |",
             "|---|------|-------|--------|------------|--------|"]
    for i, row in enumerate(report["layers"]):
        lines.append(f"| {i + 1} | {row['kind']} | {tuple(row['in_shape'])} | "
                     f"{tuple(row['out_shape'])} | {row['formula']} | {row['params']:,} |")
    lines.append(f"| | probability head | | | | {report['head_params']:,} |")
    lines.append("")
    lines.append(f"Trunk total: {report['trunk_total']:,}; with head: {report['total']:,}")
    if "blocks" in report:
        lines += ["", "| block | ours | published | delta |", "|---|---|---|---|"]
        for i, b in enumerate(report["blocks"]):
            lines.append(f"| {i + 1} | {b['ours']:,} | {b['published']:,} | {b['delta']:+,} |")
        lines.append("")
        lines.append(f"Published total {report['published_total']:,}; trunk "
                     f"relative delta {report['relative_delta']:+.2%}")
    return "\n".join(lines) + "\n"
