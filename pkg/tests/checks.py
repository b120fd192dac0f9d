"""Property checkers shared by the unit tests and the acceptance module."""

import numpy as np

from emoimage import augment
from emoimage.clip import NUM_CLASSES


def cutmix_trial(rng, width=None, height=230):
    """One randomized CutMix trial; returns a list of violated properties."""
    width = width or int(rng.integers(1, 400))
    a = rng.random((3, width, height))
    b = rng.random((3, width, height)) + 2.0  # disjoint value ranges identify provenance
    la = np.eye(NUM_CLASSES)[rng.integers(NUM_CLASSES)]
    lb = np.eye(NUM_CLASSES)[rng.integers(NUM_CLASSES)]
    lam = float(rng.choice([0.0, 1.0, rng.beta(1.0, 1.0)], p=[0.05, 0.05, 0.9]))
    image, label, lam_out, box = augment.cutmix_arrays(a, b, la, lb, lam, rng)
    bad = []
    if abs(label.sum() - 1.0) > 1e-12:
        bad.append("label-sum")
    inside = np.zeros((width, height), dtype=bool)
    inside[box.t0 : box.t1, box.f0 : box.f1] = True
    if not (np.array_equal(image[:, inside], b[:, inside]) and np.array_equal(image[:, ~inside], a[:, ~inside])):
        bad.append("provenance")
    if lam_out != 1.0 - box.area / (width * height) or int(inside.sum()) != box.area:
        bad.append("lambda-area")
    if not np.allclose(label, lam_out * la + (1 - lam_out) * lb, atol=1e-15):
        bad.append("label-mix")
    if lam == 1.0 and not (np.array_equal(image, a) and np.array_equal(label, la)):
        bad.append("identity-1")
    if lam == 0.0 and not (np.array_equal(image, b) and np.array_equal(label, lb)):
        bad.append("identity-0")
    return bad


def padding_violations(batch):
    """Every padded signal must be zero past its true length, and widths must agree."""
    bad = []
    widths = {s.size for s in batch.signals}
    if len(widths) != 1 or batch.images.shape[2] != int(batch.valid_widths.max()):
        bad.append("width")
    for signal, length in zip(batch.signals, batch.lengths):
        if np.any(signal[length:] != 0):
            bad.append("zero-region")
    return bad


def gradient_check(probes=60, seed=0):
    """Analytic vs central-difference gradients on a tiny float64 VGG.

    Returns the list of relative errors, one per probed parameter entry.
    """
    import torch

    from emoimage.model import VGG, soft_cross_entropy

    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    model = VGG(((3,), (4,)), use_batch_norm=True, num_classes=NUM_CLASSES, classifier_hidden=6, dropout=0.0, pool_size=2).double()
    # the default 0.01-std classifier init leaves gradients near round-off
    for m in model.classifier:
        if isinstance(m, torch.nn.Linear):
            torch.nn.init.normal_(m.weight, 0.0, 0.5)
    model.train()
    x = torch.from_numpy(rng.standard_normal((3, 3, 8, 10)))
    y = torch.from_numpy(rng.dirichlet(np.ones(NUM_CLASSES), 3))

    def loss():
        return soft_cross_entropy(model(x), y)

    model.zero_grad()
    loss().backward()
    params = [p for p in model.parameters() if p.requires_grad]
    sizes = np.array([p.numel() for p in params])
    errors = []
    eps = 1e-6
    while len(errors) < probes:
        k = int(rng.choice(len(params), p=sizes / sizes.sum()))
        p = params[k]
        flat = p.data.view(-1)
        i = int(rng.integers(p.numel()))
        analytic = float(p.grad.view(-1)[i])
        original = float(flat[i])
        with torch.no_grad():
            flat[i] = original + eps
            up = float(loss())
            flat[i] = original - eps
            down = float(loss())
            flat[i] = original
        numeric = (up - down) / (2 * eps)
        scale = max(abs(analytic), abs(numeric))
        if scale < 1e-7:
            # a gradient that vanishes both ways carries no relative information
            errors.append(0.0 if abs(analytic - numeric) < 1e-9 else 1.0)
            continue
        errors.append(abs(analytic - numeric) / scale)
    return errors
