"""Synthetic case documents: the bundled 5-bus case, the 33-bus template and random small instances."""

from __future__ import annotations

import numpy as np

from .case import CaseData, case_from_dict

# Baran & Wu 33-bus feeder: (from, to, r_ohm, x_ohm) and bus loads (kW, kvar).
IEEE33_LINES = [
    (1, 2, 0.0922, 0.0470), (2, 3, 0.4930, 0.2511), (3, 4, 0.3660, 0.1864), (4, 5, 0.3811, 0.1941),
    (5, 6, 0.8190, 0.7070), (6, 7, 0.1872, 0.6188), (7, 8, 0.7114, 0.2351), (8, 9, 1.0300, 0.7400),
    (9, 10, 1.0440, 0.7400), (10, 11, 0.1966, 0.0650), (11, 12, 0.3744, 0.1238), (12, 13, 1.4680, 1.1550),
    (13, 14, 0.5416, 0.7129), (14, 15, 0.5910, 0.5260), (15, 16, 0.7463, 0.5450), (16, 17, 1.2890, 1.7210),
    (17, 18, 0.7320, 0.5740), (2, 19, 0.1640, 0.1565), (19, 20, 1.5042, 1.3554), (20, 21, 0.4095, 0.4784),
    (21, 22, 0.7089, 0.9373), (3, 23, 0.4512, 0.3083), (23, 24, 0.8980, 0.7091), (24, 25, 0.8960, 0.7011),
    (6, 26, 0.2030, 0.1034), (26, 27, 0.2842, 0.1447), (27, 28, 1.0590, 0.9337), (28, 29, 0.8042, 0.7006),
    (29, 30, 0.5075, 0.2585), (30, 31, 0.9744, 0.9630), (31, 32, 0.3105, 0.3619), (32, 33, 0.3410, 0.5302),
]
IEEE33_LOADS = {
    2: (100, 60), 3: (90, 40), 4: (120, 80), 5: (60, 30), 6: (60, 20), 7: (200, 100), 8: (200, 100),
    9: (60, 20), 10: (60, 20), 11: (45, 30), 12: (60, 35), 13: (60, 35), 14: (120, 80), 15: (60, 10),
    16: (60, 20), 17: (60, 20), 18: (90, 40), 19: (90, 40), 20: (90, 40), 21: (90, 40), 22: (90, 40),
    23: (90, 50), 24: (420, 200), 25: (420, 200), 26: (60, 25), 27: (60, 25), 28: (60, 20), 29: (120, 70),
    30: (200, 600), 31: (150, 70), 32: (210, 100), 33: (60, 40),
}
IEEE33_KV = 12.66
IEEE33_SBASE_KVA = 10000.0


def pv_shape(horizon: int = 24, sunrise: int = 8, sunset: int = 18) -> np.ndarray:
    """Half-sine irradiance shape, zero outside (sunrise, sunset)."""
    t = np.arange(horizon) + 0.5
    x = np.clip((t - sunrise) / (sunset - sunrise), 0.0, 1.0)
    return np.where((t > sunrise) & (t < sunset), np.sin(np.pi * x), 0.0)


def load_shape(horizon: int = 24) -> np.ndarray:
    t = np.arange(horizon)
    morning = np.exp(-0.5 * ((t - 8) / 2.0) ** 2)
    evening = np.exp(-0.5 * ((t - 19) / 2.5) ** 2)
    return 0.45 + 0.25 * morning + 0.45 * evening


def tou_price(horizon: int = 24) -> np.ndarray:
    t = np.arange(horizon) % 24
    return np.where(t < 7, 0.08, np.where((t >= 17) & (t < 22), 0.30, 0.16))


def _pv_history(rng: np.random.Generator, base: np.ndarray, n: int) -> np.ndarray:
    """Daily PV samples: clear-sky shape scaled by a cloudiness factor with hourly noise."""
    cloud = rng.uniform(0.35, 1.0, size=n)
    noise = rng.normal(0.0, 0.06, size=(len(base), n))
    return np.clip(base[:, None] * (cloud[None, :] + noise), 0.0, 1.0)


def toy5_document(seed: int = 7) -> tuple[dict, np.ndarray]:
    """5-bus radial case (1-2, 2-3, 3-4, 2-5) with three scenarios; returns (document, pv history)."""
    rng = np.random.default_rng(seed)
    T = 24
    base_pv = pv_shape(T)
    history = _pv_history(rng, base_pv, 60)
    levels = np.quantile(history.sum(axis=0), [1 / 6, 1 / 2, 5 / 6])
    picks = [int(np.argmin(np.abs(history.sum(axis=0) - lv))) for lv in levels]
    pv = history[:, picks]  # slots x scenarios
    peak = {"2": 40.0, "3": 60.0, "4": 50.0, "5": 30.0}
    shape = load_shape(T)
    pl = []
    for s, scale in enumerate((1.05, 1.0, 0.9)):
        m = np.zeros((T, 5))
        for k, b in enumerate(["1", "2", "3", "4", "5"]):
            if b in peak:
                m[:, k] = np.round(peak[b] * scale * shape * (1 + 0.05 * np.sin(k + s + np.arange(T))), 3)
        pl.append(m.tolist())
    doc = {
        "name": "toy5",
        "horizon": T,
        "segments": 12,
        "units": {"power": "kW", "energy": "kWh", "currency": "EUR"},
        "network": {
            "substation": "1",
            "s_base": 1000.0,
            "bus_defaults": {"v_min": 0.81, "v_max": 1.21, "theta_min": -0.5, "theta_max": 0.5},
            "buses": [
                {"id": "1", "pg_max": 1000.0, "qg_min": -1000.0, "qg_max": 1000.0,
                 "pv_allowed": False, "bess_allowed": False},
                {"id": "2"}, {"id": "3"}, {"id": "4"}, {"id": "5"},
            ],
            "lines": [
                {"from": "1", "to": "2", "r": 0.01, "x": 0.01, "s_max": 800.0},
                {"from": "2", "to": "3", "r": 0.02, "x": 0.015, "s_max": 500.0},
                {"from": "3", "to": "4", "r": 0.02, "x": 0.015, "s_max": 500.0},
                {"from": "2", "to": "5", "r": 0.03, "x": 0.02, "s_max": 500.0},
            ],
        },
        "tech": {"soc_min": 0.1, "soc_max": 0.9, "soc_init": 0.5, "eff_charge": 0.95,
                 "eff_discharge": 0.95, "pb": 40.0, "cap_min": 5.0, "cap_max": 150.0,
                 "n_pv_max": 2, "n_bt_max": 1, "dt": 1.0},
        "costs": {"c_pv": 0.15, "i_pv": 0.5, "c_bt": 0.05, "i_bt": 0.5,
                  "oc_pv": 0.005, "oc_bt": 0.01, "price": np.round(tou_price(T), 4).tolist()},
        "scenarios": {
            "probabilities": [0.3, 0.4, 0.3],
            "pv": np.round(pv, 4).tolist(),
            "pl": pl,
            "ql_ratio": 0.3,
        },
        "uncertainty": {"pv": {"method": "percentile", "history": {"csv": "toy5_pv_history.csv"},
                               "p_low": 15, "p_high": 85},
                        "pl": {"method": "scenario_range"}},
    }
    return doc, np.round(history, 4)


def ieee33_document(seed: int = 11) -> dict:
    """33-bus template: published topology and peak loads, placeholder profiles and costs."""
    rng = np.random.default_rng(seed)
    T = 24
    z_base = IEEE33_KV**2 * 1000.0 / IEEE33_SBASE_KVA  # ohm
    shape = load_shape(T)
    pv = np.stack([pv_shape(T) * f for f in (1.0, 0.75, 0.45)], axis=1)
    pl = []
    for scale in (1.05, 1.0, 0.92):
        m = np.zeros((T, 33))
        for b, (p_kw, _) in IEEE33_LOADS.items():
            m[:, b - 1] = np.round(p_kw * scale * shape * rng.uniform(0.95, 1.05, size=T), 3)
        pl.append(m.tolist())
    ratio = {b: q / p for b, (p, q) in IEEE33_LOADS.items()}
    ql = [(np.array(m) * np.array([ratio.get(k + 1, 0.0) for k in range(33)])[None, :]).round(3).tolist()
          for m in pl]
    return {
        "name": "ieee33_template",
        "provenance": "topology, impedances and peak loads from the public 33-bus feeder description "
                      "(12.66 kV, 10 MVA base); profiles, prices and costs are placeholders",
        "horizon": T,
        "segments": 12,
        "network": {
            "substation": "1",
            "s_base": IEEE33_SBASE_KVA,
            "bus_defaults": {"v_min": 0.81, "v_max": 1.21, "theta_min": -0.5, "theta_max": 0.5},
            "buses": [{"id": "1", "pg_max": 10000.0, "qg_min": -10000.0, "qg_max": 10000.0,
                       "pv_allowed": False, "bess_allowed": False}]
                     + [{"id": str(b)} for b in range(2, 34)],
            "lines": [{"from": str(i), "to": str(j), "r": round(r / z_base, 6), "x": round(x / z_base, 6),
                       "s_max": 6000.0} for i, j, r, x in IEEE33_LINES],
        },
        "tech": {"soc_min": 0.1, "soc_max": 0.9, "soc_init": 0.5, "eff_charge": 0.95,
                 "eff_discharge": 0.95, "pb": 300.0, "cap_min": 50.0, "cap_max": 1500.0,
                 "n_pv_max": 3, "n_bt_max": 3, "dt": 1.0},
        "costs": {"c_pv": 0.15, "i_pv": 5.0, "c_bt": 0.05, "i_bt": 5.0,
                  "oc_pv": 0.005, "oc_bt": 0.01, "price": np.round(tou_price(T), 4).tolist()},
        "scenarios": {"probabilities": [0.3, 0.4, 0.3], "pv": np.round(pv, 4).tolist(), "pl": pl, "ql": ql},
        "uncertainty": {"pv": {"method": "scenario_range"}, "pl": {"method": "scenario_range"}},
    }


def random_case(rng: np.random.Generator, n_bus: int | None = None, horizon: int | None = None,
                n_scen: int | None = None) -> CaseData:
    """Small random radial case (for oracle cross-checks)."""
    B = int(n_bus or rng.integers(2, 5))
    T = int(horizon or rng.integers(1, 5))
    S = int(n_scen or rng.integers(1, 3))
    ids = [str(k + 1) for k in range(B)]
    parents = [int(rng.integers(0, k)) for k in range(1, B)]
    base_pv = rng.uniform(0.0, 1.0, size=T)
    pv = np.clip(base_pv[:, None] * rng.uniform(0.6, 1.2, size=(T, S)), 0.0, 1.0)
    pl = []
    for _ in range(S):
        m = np.zeros((T, B))
        m[:, 1:] = rng.uniform(5.0, 40.0, size=(T, B - 1))
        pl.append(m.round(3).tolist())
    price = rng.uniform(0.05, 0.35, size=T)
    prob = rng.dirichlet(np.ones(S)) if S > 1 else np.ones(1)
    prob = np.round(prob, 6)
    prob[-1] = 1.0 - prob[:-1].sum()
    doc = {
        "name": "random",
        "horizon": T,
        "segments": int(rng.choice([4, 8, 12])),
        "network": {
            "substation": "1",
            "s_base": 1000.0,
            "buses": [{"id": "1", "pg_max": 500.0, "qg_min": -500.0, "qg_max": 500.0,
                       "pv_allowed": False, "bess_allowed": False}]
                     + [{"id": b, "v_min": 0.81, "v_max": 1.21} for b in ids[1:]],
            "lines": [{"from": ids[p], "to": ids[k + 1], "r": float(rng.uniform(0.005, 0.03)),
                       "x": float(rng.uniform(0.005, 0.03)), "s_max": 400.0} for k, p in enumerate(parents)],
        },
        "tech": {"pb": float(rng.uniform(10, 40)), "cap_min": 0.0, "cap_max": 100.0,
                 "n_pv_max": 2, "n_bt_max": 1, "dt": 1.0},
        "costs": {"c_pv": float(rng.uniform(0.01, 0.1)), "i_pv": 0.2, "c_bt": float(rng.uniform(0.01, 0.05)),
                  "i_bt": 0.2, "oc_pv": 0.005, "oc_bt": 0.01, "price": price.round(4).tolist()},
        "scenarios": {"probabilities": prob.tolist(), "pv": pv.round(4).tolist(), "pl": pl, "ql_ratio": 0.2},
    }
    return case_from_dict(doc)


def two_bus_case(horizon: int = 1, pl: float = 100.0, pv=None, price=0.2, allow_der: bool = False,
                 c_pv: float = 0.05) -> CaseData:
    """Substation plus one load bus; handy for hand-checked examples."""
    pv = np.zeros(horizon) if pv is None else np.asarray(pv, dtype=float)
    price = np.broadcast_to(np.asarray(price, dtype=float), (horizon,))
    doc = {
        "horizon": horizon,
        "network": {
            "substation": "1",
            "buses": [{"id": "1", "pg_max": 1e4, "qg_min": -1e4, "qg_max": 1e4,
                       "pv_allowed": False, "bess_allowed": False},
                      {"id": "2", "pv_allowed": allow_der, "bess_allowed": allow_der}],
            "lines": [{"from": "1", "to": "2", "r": 1e-5, "x": 1e-5, "s_max": 1e4}],
        },
        "tech": {"cap_max": 1000.0, "pb": 100.0},
        "costs": {"c_pv": c_pv, "c_bt": 0.05, "i_pv": 0.0, "i_bt": 0.0, "oc_pv": 0.0, "oc_bt": 0.0,
                  "price": [float(p) for p in price]},
        "scenarios": {"probabilities": [1.0], "pv": [[float(v)] for v in pv],
                      "pl": [[[0.0, pl]] * horizon]},
    }
    return case_from_dict(doc)

