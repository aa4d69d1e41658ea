"""Fixture builders shared by the test modules."""

from wpimpact.pbp import EVENT_COLUMNS

HOME = ["H1", "H2", "H3", "H4", "H5"]
AWAY = ["A1", "A2", "A3", "A4", "A5"]


class EventFile:
    """Builds event CSV text row by row, tracking the running score."""

    def __init__(self, game_id="g1", date="2013-11-01", home="HOM", away="AWY"):
        self.game_id, self.date, self.home, self.away = game_id, date, home, away
        self.rows = []
        self.score = [0, 0]

    def add(self, period, t, kind, side="none", pin="", pout="", points=0):
        if kind == "score":
            self.score[0 if side == "home" else 1] += points
        self.rows.append([self.game_id, self.date, period, t, kind, side, pin, pout, points,
                          self.score[0], self.score[1], self.home, self.away])
        return self

    def starters(self, home=HOME, away=AWAY):
        self.add(1, 0, "period_start")
        for p in home:
            self.add(1, 0, "substitution", "home", p)
        for p in away:
            self.add(1, 0, "substitution", "away", p)
        return self

    def periods(self, n, start=1, final=True):
        """period_end/period_start pairs from ``start`` through ``n``."""
        for k in range(start, n + 1):
            if k > 1:
                self.add(k, 720 * (k - 1), "period_start")
            self.add(k, 720 * k, "period_end")
        if final:
            self.add(n, 720 * n, "game_end")
        return self

    def text(self, header=True):
        lines = [",".join(EVENT_COLUMNS)] if header else []
        lines += [",".join(str(c) for c in r) for r in self.rows]
        return "\n".join(lines) + "\n"


def csv_text(*files):
    rows = [",".join(EVENT_COLUMNS)]
    for f in files:
        rows += f.text(header=False).strip().split("\n")
    return "\n".join(rows) + "\n"


def quadrature_posterior(x, y, lam, n_beta=1601, n_logs=801):
    """Posterior mean and SD of the slope by brute-force 2-D quadrature.

    Model: y = mu + x * beta + noise, flat prior on mu (integrated out in
    closed form), p(sigma2) proportional to 1/sigma2 and a Laplace prior on
    beta with rate lam / sigma.  The grid covers (beta, log sigma2).
    """
    import numpy as np

    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = y.size
    xc, yc = x - x.mean(), y - y.mean()
    b_ols = (xc @ yc) / (xc @ xc)
    s_ols = np.sqrt(np.sum((yc - b_ols * xc) ** 2) / (n - 2))
    half = 10 * s_ols / np.sqrt(xc @ xc) + abs(b_ols)
    beta = np.linspace(b_ols - half, b_ols + half, n_beta)
    logs2 = np.linspace(np.log(s_ols ** 2) - 3, np.log(s_ols ** 2) + 3, n_logs)
    B, LS = np.meshgrid(beta, logs2, indexing="ij")
    s2 = np.exp(LS)
    rss = (yc @ yc) - 2 * B * (xc @ yc) + B * B * (xc @ xc)
    # log density in (beta, log sigma2): the Jacobian sigma2 cancels the 1/sigma2 prior
    logp = (-(n - 1) / 2 * LS - rss / (2 * s2)
            + np.log(lam) - 0.5 * LS - lam * np.abs(B) / np.sqrt(s2))
    w = np.exp(logp - logp.max())
    pb = w.sum(axis=1)
    pb /= pb.sum()
    mean = float(pb @ beta)
    sd = float(np.sqrt(pb @ (beta - mean) ** 2))
    return mean, sd
