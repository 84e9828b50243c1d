"""Independent water-property oracle: IAPWS-IF97 region 1 density and the
IAPWS 2008 viscosity correlation (critical enhancement omitted)."""

import numpy as np

_R = 461.526  # J/(kg K)

_I1 = np.array([0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2,
                3, 3, 3, 4, 4, 4, 5, 8, 8, 21, 23, 29, 30, 31, 32])
_J1 = np.array([-2, -1, 0, 1, 2, 3, 4, 5, -9, -7, -1, 0, 1, 3, -3, 0, 1, 3,
                17, -4, 0, 6, -5, -2, 10, -8, -11, -6, -29, -31, -38, -39,
                -40, -41])
_N1 = np.array([
    0.14632971213167, -0.84548187169114, -3.756360367204,
    3.3855169168385, -0.95791963387872, 0.15772038513228,
    -0.016616417199501, 8.1214629983568e-4, 2.8319080123804e-4,
    -6.0706301565874e-4, -0.018990068218419, -0.032529748770505,
    -0.021841717175414, -5.283835796993e-5, -4.7184321073267e-4,
    -3.0001780793026e-4, 4.7661393906987e-5, -4.4141845330846e-6,
    -7.2694996297594e-16, -3.1679644845054e-5, -2.8270797985312e-6,
    -8.5205128120103e-10, -2.2425281908e-6, -6.5171222895601e-7,
    -1.4341729937924e-13, -4.0516996860117e-7, -1.2734301741641e-9,
    -1.7424871230634e-10, -6.8762131295531e-19, 1.4478307828521e-20,
    2.6335781662795e-23, -1.1947622640071e-23, 1.8228094581404e-24,
    -9.3537087292458e-26,
])


def if97_region1_density(pressure_pa: float, temperature_k: float) -> float:
    """Compressed liquid density from the region-1 Gibbs formulation."""
    pi = pressure_pa / 16.53e6
    tau = 1386.0 / temperature_k
    gamma_pi = np.sum(-_N1 * _I1 * (7.1 - pi) ** (_I1 - 1.0)
                      * (tau - 1.222) ** _J1)
    v = _R * temperature_k / pressure_pa * pi * gamma_pi
    return 1.0 / v


_H0 = np.array([1.67752, 2.20462, 0.6366564, -0.241605])
_HIJ = np.zeros((6, 7))
_HIJ[0, 0] = 5.20094e-1
_HIJ[1, 0] = 8.50895e-2
_HIJ[2, 0] = -1.08374
_HIJ[3, 0] = -2.89555e-1
_HIJ[0, 1] = 2.22531e-1
_HIJ[1, 1] = 9.99115e-1
_HIJ[2, 1] = 1.88797
_HIJ[3, 1] = 1.26613
_HIJ[5, 1] = 1.20573e-1
_HIJ[0, 2] = -2.81378e-1
_HIJ[1, 2] = -9.06851e-1
_HIJ[2, 2] = -7.72479e-1
_HIJ[3, 2] = -4.89837e-1
_HIJ[4, 2] = -2.57040e-1
_HIJ[0, 3] = 1.61913e-1
_HIJ[1, 3] = 2.57399e-1
_HIJ[0, 4] = -3.25372e-2
_HIJ[3, 4] = 6.98452e-2
_HIJ[4, 5] = 8.72102e-3
_HIJ[3, 6] = -4.35673e-3
_HIJ[5, 6] = -5.93264e-4


def iapws_viscosity(temperature_k: float, density: float) -> float:
    """Dynamic viscosity [Pa s] away from the critical region."""
    t_bar = temperature_k / 647.096
    rho_bar = density / 322.0
    mu0 = 100.0 * np.sqrt(t_bar) / np.sum(_H0 / t_bar ** np.arange(4))
    ti = (1.0 / t_bar - 1.0) ** np.arange(6)
    rj = (rho_bar - 1.0) ** np.arange(7)
    mu1 = np.exp(rho_bar * ti @ _HIJ @ rj)
    return mu0 * mu1 * 1e-6
