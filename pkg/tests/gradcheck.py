"""Central finite-difference gradient checks over flat parameter coordinates."""

H = 1e-5
FLOOR = 1e-8  # denominators below this are treated as absolute error


def rel_error(analytic, numeric):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), FLOOR)


def check_coords(loss, params, grads, rng, n_coords=10, h=H):
    """Max relative error between ``grads`` and central differences of ``loss(params)``.

    ``params`` is perturbed in place and restored; ``loss`` must read it.
    """
    flat = params.flat()
    g = grads.flat()
    worst = 0.0
    for i in rng.choice(flat.size, size=n_coords, replace=False):
        orig = flat[i]
        flat[i] = orig + h
        params.set_flat(flat)
        up = loss(params)
        flat[i] = orig - h
        params.set_flat(flat)
        down = loss(params)
        flat[i] = orig
        params.set_flat(flat)
        worst = max(worst, rel_error(g[i], (up - down) / (2 * h)))
    return worst
