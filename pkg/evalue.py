"""
=============================================================================
E-VALUE - Forca minima de confundimento para explicar um risco observado
=============================================================================

    E(RR) = RR + sqrt(RR * (RR - 1)),  RR >= 1

Razoes menores que 1 sao invertidas antes (com aviso). A comparacao
com a projecao mostra quanto o tau projetado se afasta do RR observado.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from projection import DensityResult
from reduced_form import ReducedFormDraws

logger = logging.getLogger(__name__)

COLUNAS = ["obs", "rr_obs", "evalue", "tau_mean", "rel_dev"]


@dataclass(frozen=True)
class EvalueReport:
    rr_obs: float
    evalue: float
    invertido: bool = False


def _evalue_array(rr: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        rr = np.where(rr < 1.0, 1.0 / rr, rr)
        return rr + np.sqrt(rr * (rr - 1.0))


def evalue(rr: float) -> EvalueReport:
    """
    E-value de uma razao de risco observada.

    Raises:
        ValueError: se rr nao e positivo e finito
    """
    rr = float(rr)
    if not np.isfinite(rr) or rr <= 0:
        raise ValueError(f"Razao de risco deve ser positiva e finita, recebido: {rr}")
    invertido = rr < 1.0
    if invertido:
        warnings.warn(f"Razao de risco {rr:g} < 1 invertida para {1.0 / rr:g}")
    return EvalueReport(rr_obs=rr, evalue=float(_evalue_array(np.array(rr))), invertido=invertido)


def bound_threshold(rr_obs: float, rr_true: float) -> float:
    """
    Confundimento minimo para que o RR causal verdadeiro seja rr_true
    dado rr_obs: E(rr_obs / rr_true).

    Raises:
        ValueError: se rr_true > rr_obs ou rr_true < 1
    """
    if rr_true < 1.0:
        raise ValueError(f"rr_true deve ser >= 1, recebido: {rr_true}")
    if rr_true > rr_obs:
        raise ValueError(f"rr_true ({rr_true}) nao pode exceder rr_obs ({rr_obs})")
    razao = rr_obs / rr_true
    return float(razao + np.sqrt(razao * (razao - 1.0)))


def compare_arrays(rr_obs: np.ndarray, tau: np.ndarray) -> pd.DataFrame:
    """
    Tabela por observacao. Entradas (S, n) ou (n,): a media e tomada
    sobre os draws (linhas).
    """
    rr_obs = np.atleast_2d(np.asarray(rr_obs, dtype=float))
    tau = np.atleast_2d(np.asarray(tau, dtype=float))
    if rr_obs.size == 0:
        return pd.DataFrame(columns=COLUNAS)
    if rr_obs.shape != tau.shape:
        raise ValueError(f"rr_obs {rr_obs.shape} e tau {tau.shape} devem ter o mesmo shape")

    n_invertidos = int(np.sum(rr_obs < 1.0))
    if n_invertidos:
        warnings.warn(f"{n_invertidos} razao(oes) de risco < 1 invertidas no calculo do E-value")

    rr_medio = rr_obs.mean(axis=0)
    tau_medio = tau.mean(axis=0)
    return pd.DataFrame({
        "obs": np.arange(rr_obs.shape[1]),
        "rr_obs": rr_medio,
        "evalue": _evalue_array(rr_obs).mean(axis=0),
        "tau_mean": tau_medio,
        "rel_dev": (tau_medio - rr_medio) / rr_medio,
    })


def compare(draws: ReducedFormDraws, resultado: DensityResult) -> pd.DataFrame:
    """Compara RR observado / E-value com o tau projetado de uma densidade."""
    if draws.n_obs == 0:
        return pd.DataFrame(columns=COLUNAS)
    if resultado.mode == "mean-only":
        _, pB1, pB0 = draws.posterior_means()
        pB1, pB0 = pB1[None, :], pB0[None, :]
    else:
        pB1, pB0 = draws.pB1[resultado.draw_index], draws.pB0[resultado.draw_index]
    with np.errstate(divide="ignore"):
        rr = pB1 / pB0
    tabela = compare_arrays(rr, resultado.tau)
    if draws.labels is not None:
        tabela.insert(1, "label", list(draws.labels))
    return tabela


def resumo(tabela: pd.DataFrame, label: Optional[str] = None) -> dict:
    """Resumo agregado de uma tabela de comparacao."""
    return {
        "density": label,
        "rr_obs_mean": float(tabela["rr_obs"].mean()),
        "evalue_mean": float(tabela["evalue"].mean()),
        "tau_mean": float(tabela["tau_mean"].mean()),
        "rel_dev_mean": float(tabela["rel_dev"].mean()),
    }


# =============================================================================
# TESTE DO MODULO
# =============================================================================

if __name__ == "__main__":
    print("=" * 60)
    print("TESTE DO MODULO E-VALUE")
    print("=" * 60)
    for rr in (1.0, 1.5, 2.0, 3.9):
        print(f"    RR = {rr:<4}  E = {evalue(rr).evalue:.4f}")
