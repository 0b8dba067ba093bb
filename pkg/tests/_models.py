"""Random model builders shared by the tests."""
import numpy as np

from causal_transfer.mdp import ContextualMdp, Mdp


def random_mdp(rng, S=3, A=2, K=2, gamma=0.9, sparse=False) -> Mdp:
    P = rng.dirichlet(np.ones(S), size=(S, A))
    if sparse:
        P = np.where(rng.random(P.shape) < 0.4, 0.0, P)
        P[..., 0] += 1e-3
        P /= P.sum(-1, keepdims=True)
    R = rng.dirichlet(np.ones(K), size=(S, A, S))
    values = np.sort(rng.choice(np.arange(-3, 6), size=K, replace=False)).astype(float)
    initial = np.zeros(S)
    initial[0] = 1.0
    return Mdp(P, values, R, gamma, initial)


def random_cmdp(rng, U=2, S=3, A=2, K=2, gamma=0.9) -> ContextualMdp:
    base = random_mdp(rng, S, A, K, gamma)
    mdps = [base]
    for _ in range(U - 1):
        m = random_mdp(rng, S, A, K, gamma)
        mdps.append(Mdp(m.transition, base.reward_values, m.reward_probs, gamma, base.initial))
    return ContextualMdp(tuple(mdps), rng.dirichlet(np.ones(U)))


def confounded_joint(rng, n_o, n_a, n_u=2):
    """Observational joint ``(n_o, n_a)`` and true do-distributions ``(n_a, n_o)``
    from a random context-aware behaviour policy."""
    rho = rng.dirichlet(np.ones(n_u))
    pi = rng.dirichlet(np.ones(n_a) * 0.7, size=n_u)           # (u, a)
    out = rng.dirichlet(np.ones(n_o) * 0.7, size=(n_u, n_a))   # (u, a, o)
    joint = np.einsum("u,ua,uao->oa", rho, pi, out)
    do = np.einsum("u,uao->ao", rho, out)
    return joint, do
