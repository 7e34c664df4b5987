//! Dormand-Prince 8(5,3) with Hairer's step-size control, on flat `f64`
//! state vectors.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Tolerances and step limits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    #[serde(default = "default_rtol")]
    pub rel_tol: f64,
    #[serde(default = "default_atol")]
    pub abs_tol: f64,
    /// Upper bound on |h|; `None` means the interval length.
    #[serde(default)]
    pub max_step: Option<f64>,
    /// Steps per Floquet period when a Floquet drive is active.
    #[serde(default = "default_substeps")]
    pub floquet_substeps: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_rtol() -> f64 {
    1e-12
}
fn default_atol() -> f64 {
    1e-15
}
fn default_substeps() -> usize {
    40
}
fn default_max_steps() -> usize {
    50_000_000
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: default_rtol(),
            abs_tol: default_atol(),
            max_step: None,
            floquet_substeps: default_substeps(),
            max_steps: default_max_steps(),
        }
    }
}

/// Step counters of one integration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Step size proposed for continuing past the end point.
    pub next_h: f64,
}

const C2: f64 = 0.526001519587677318785587544488E-01;
const C3: f64 = 0.789002279381515978178381316732E-01;
const C4: f64 = 0.118350341907227396726757197510E+00;
const C5: f64 = 0.281649658092772603273242802490E+00;
const C6: f64 = 0.333333333333333333333333333333E+00;
const C7: f64 = 0.25E+00;
const C8: f64 = 0.307692307692307692307692307692E+00;
const C9: f64 = 0.651282051282051282051282051282E+00;
const C10: f64 = 0.6E+00;
const C11: f64 = 0.857142857142857142857142857142E+00;

const A21: f64 = 5.26001519587677318785587544488E-2;
const A31: f64 = 1.97250569845378994544595329183E-2;
const A32: f64 = 5.91751709536136983633785987549E-2;
const A41: f64 = 2.95875854768068491816892993775E-2;
const A43: f64 = 8.87627564304205475450678981324E-2;
const A51: f64 = 2.41365134159266685502369798665E-1;
const A53: f64 = -8.84549479328286085344864962717E-1;
const A54: f64 = 9.24834003261792003115737966543E-1;
const A61: f64 = 3.7037037037037037037037037037E-2;
const A64: f64 = 1.70828608729473871279604482173E-1;
const A65: f64 = 1.25467687566822425016691814123E-1;
const A71: f64 = 3.7109375E-2;
const A74: f64 = 1.70252211019544039314978060272E-1;
const A75: f64 = 6.02165389804559606850219397283E-2;
const A76: f64 = -1.7578125E-2;
const A81: f64 = 3.70920001185047927108779319836E-2;
const A84: f64 = 1.70383925712239993810214054705E-1;
const A85: f64 = 1.07262030446373284651809199168E-1;
const A86: f64 = -1.53194377486244017527936158236E-2;
const A87: f64 = 8.27378916381402288758473766002E-3;
const A91: f64 = 6.24110958716075717114429577812E-1;
const A94: f64 = -3.36089262944694129406857109825E0;
const A95: f64 = -8.68219346841726006818189891453E-1;
const A96: f64 = 2.75920996994467083049415600797E1;
const A97: f64 = 2.01540675504778934086186788979E1;
const A98: f64 = -4.34898841810699588477366255144E1;
const A101: f64 = 4.77662536438264365890433908527E-1;
const A104: f64 = -2.48811461997166764192642586468E0;
const A105: f64 = -5.90290826836842996371446475743E-1;
const A106: f64 = 2.12300514481811942347288949897E1;
const A107: f64 = 1.52792336328824235832596922938E1;
const A108: f64 = -3.32882109689848629194453265587E1;
const A109: f64 = -2.03312017085086261358222928593E-2;
const A111: f64 = -9.3714243008598732571704021658E-1;
const A114: f64 = 5.18637242884406370830023853209E0;
const A115: f64 = 1.09143734899672957818500254654E0;
const A116: f64 = -8.14978701074692612513997267357E0;
const A117: f64 = -1.85200656599969598641566180701E1;
const A118: f64 = 2.27394870993505042818970056734E1;
const A119: f64 = 2.49360555267965238987089396762E0;
const A1110: f64 = -3.0467644718982195003823669022E0;
const A121: f64 = 2.27331014751653820792359768449E0;
const A124: f64 = -1.05344954667372501984066689879E1;
const A125: f64 = -2.00087205822486249909675718444E0;
const A126: f64 = -1.79589318631187989172765950534E1;
const A127: f64 = 2.79488845294199600508499808837E1;
const A128: f64 = -2.85899827713502369474065508674E0;
const A129: f64 = -8.87285693353062954433549289258E0;
const A1210: f64 = 1.23605671757943030647266201528E1;
const A1211: f64 = 6.43392746015763530355970484046E-1;

const B1: f64 = 5.42937341165687622380535766363E-2;
const B6: f64 = 4.45031289275240888144113950566E0;
const B7: f64 = 1.89151789931450038304281599044E0;
const B8: f64 = -5.8012039600105847814672114227E0;
const B9: f64 = 3.1116436695781989440891606237E-1;
const B10: f64 = -1.52160949662516078556178806805E-1;
const B11: f64 = 2.01365400804030348374776537501E-1;
const B12: f64 = 4.47106157277725905176885569043E-2;

const BHH1: f64 = 0.244094488188976377952755905512E+00;
const BHH2: f64 = 0.733846688281611857341361741547E+00;
const BHH3: f64 = 0.220588235294117647058823529412E-01;

const ER1: f64 = 0.1312004499419488073250102996E-01;
const ER6: f64 = -0.1225156446376204440720569753E+01;
const ER7: f64 = -0.4957589496572501915214079952E+00;
const ER8: f64 = 0.1664377182454986536961530415E+01;
const ER9: f64 = -0.3503288487499736816886487290E+00;
const ER10: f64 = 0.3341791187130174790297318841E+00;
const ER11: f64 = 0.8192320648511571246570742613E-01;
const ER12: f64 = -0.2235530786388629525884427845E-01;

const SAFE: f64 = 0.9;
const FACC1: f64 = 1.0 / 0.333;
const FACC2: f64 = 1.0 / 6.0;
const EXPO1: f64 = 1.0 / 8.0;

/// y_out = y + h * sum(coef_i * k_i)
fn combine(y: &[f64], h: f64, terms: &[(f64, &[f64])], out: &mut [f64]) {
    out.copy_from_slice(y);
    for &(c, k) in terms {
        let hc = h * c;
        for (o, &v) in out.iter_mut().zip(k) {
            *o += hc * v;
        }
    }
}

/// Reusable DOP853 stepper with its work buffers.
pub struct Dop853 {
    pub config: IntegratorConfig,
    k: [Vec<f64>; 10],
    y1: Vec<f64>,
}

impl Dop853 {
    pub fn new(config: IntegratorConfig) -> Self {
        Dop853 {
            config,
            k: Default::default(),
            y1: Vec::new(),
        }
    }

    fn ensure(&mut self, n: usize) {
        if self.y1.len() != n {
            for k in self.k.iter_mut() {
                *k = vec![0.0; n];
            }
            self.y1 = vec![0.0; n];
        }
    }

    fn initial_step<F>(&mut self, f: &mut F, t: f64, y: &[f64], dir: f64, hmax: f64) -> f64
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len() as f64;
        let (rtol, atol) = (self.config.rel_tol, self.config.abs_tol);
        let sk = |v: f64| atol + rtol * v.abs();
        let k1 = &self.k[0];
        let dnf = k1.iter().zip(y).map(|(d, v)| (d / sk(*v)).powi(2)).sum::<f64>();
        let dny = y.iter().map(|v| (v / sk(*v)).powi(2)).sum::<f64>();
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            0.01 * (dny / dnf).sqrt()
        };
        h = h.min(hmax) * dir;
        let (k0, rest) = self.k.split_at_mut(1);
        combine(y, h, &[(1.0, &k0[0])], &mut self.y1);
        f(t + h, &self.y1, &mut rest[0]);
        let der2 = rest[0]
            .iter()
            .zip(k0[0].iter())
            .zip(y)
            .map(|((a, b), v)| ((a - b) / sk(*v)).powi(2))
            .sum::<f64>()
            .sqrt()
            / h.abs();
        let der12 = der2.max((dnf / n).sqrt());
        let h1 = if der12 <= 1e-15 {
            (1e-6f64).max(h.abs() * 1e-3)
        } else {
            (0.01 / der12).powf(1.0 / 8.0)
        };
        (100.0 * h.abs()).min(h1).min(hmax) * dir
    }

    /// Integrates y from t0 to t1 in place.
    pub fn integrate<F>(&mut self, mut f: F, t0: f64, t1: f64, y: &mut [f64], h_hint: Option<f64>) -> Result<Stats>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        self.ensure(n);
        let mut stats = Stats::default();
        if t1 == t0 {
            stats.next_h = h_hint.unwrap_or(0.0);
            return Ok(stats);
        }
        let dir = (t1 - t0).signum();
        let span = (t1 - t0).abs();
        let hmax = self.config.max_step.unwrap_or(span).min(span);
        let (rtol, atol) = (self.config.rel_tol, self.config.abs_tol);

        let mut t = t0;
        f(t, y, &mut self.k[0]);
        stats.evaluations += 1;
        let mut h = match h_hint {
            Some(h) if h != 0.0 => h.abs().min(hmax) * dir,
            _ => {
                stats.evaluations += 1;
                self.initial_step(&mut f, t, y, dir, hmax)
            }
        };
        let mut last_rejected = false;
        let mut last = false;
        loop {
            if stats.accepted + stats.rejected >= self.config.max_steps {
                return Err(Error::MaxSteps { t });
            }
            if 0.1 * h.abs() <= t.abs() * f64::EPSILON {
                return Err(Error::StepSizeUnderflow { t, h });
            }
            if (t + 1.01 * h - t1) * dir > 0.0 {
                h = t1 - t;
                last = true;
            }
            let [k1, k2, k3, k4, k5, k6, k7, k8, k9, k10] = &mut self.k;
            let y1 = &mut self.y1;
            combine(y, h, &[(A21, k1)], y1);
            f(t + C2 * h, y1, k2);
            combine(y, h, &[(A31, k1), (A32, k2)], y1);
            f(t + C3 * h, y1, k3);
            combine(y, h, &[(A41, k1), (A43, k3)], y1);
            f(t + C4 * h, y1, k4);
            combine(y, h, &[(A51, k1), (A53, k3), (A54, k4)], y1);
            f(t + C5 * h, y1, k5);
            combine(y, h, &[(A61, k1), (A64, k4), (A65, k5)], y1);
            f(t + C6 * h, y1, k6);
            combine(y, h, &[(A71, k1), (A74, k4), (A75, k5), (A76, k6)], y1);
            f(t + C7 * h, y1, k7);
            combine(y, h, &[(A81, k1), (A84, k4), (A85, k5), (A86, k6), (A87, k7)], y1);
            f(t + C8 * h, y1, k8);
            combine(
                y,
                h,
                &[(A91, k1), (A94, k4), (A95, k5), (A96, k6), (A97, k7), (A98, k8)],
                y1,
            );
            f(t + C9 * h, y1, k9);
            combine(
                y,
                h,
                &[(A101, k1), (A104, k4), (A105, k5), (A106, k6), (A107, k7), (A108, k8), (A109, k9)],
                y1,
            );
            f(t + C10 * h, y1, k10);
            combine(
                y,
                h,
                &[
                    (A111, k1),
                    (A114, k4),
                    (A115, k5),
                    (A116, k6),
                    (A117, k7),
                    (A118, k8),
                    (A119, k9),
                    (A1110, k10),
                ],
                y1,
            );
            f(t + C11 * h, y1, k2);
            let xph = t + h;
            combine(
                y,
                h,
                &[
                    (A121, k1),
                    (A124, k4),
                    (A125, k5),
                    (A126, k6),
                    (A127, k7),
                    (A128, k8),
                    (A129, k9),
                    (A1210, k10),
                    (A1211, k2),
                ],
                y1,
            );
            f(xph, y1, k3);
            stats.evaluations += 11;

            // k4 <- high-order increment, y1 <- candidate state, error sums
            let mut err = 0.0;
            let mut err2 = 0.0;
            for i in 0..n {
                let inc = B1 * k1[i]
                    + B6 * k6[i]
                    + B7 * k7[i]
                    + B8 * k8[i]
                    + B9 * k9[i]
                    + B10 * k10[i]
                    + B11 * k2[i]
                    + B12 * k3[i];
                let ynew = y[i] + h * inc;
                let sk = atol + rtol * y[i].abs().max(ynew.abs());
                let e2 = inc - BHH1 * k1[i] - BHH2 * k9[i] - BHH3 * k3[i];
                err2 += (e2 / sk).powi(2);
                let e = ER1 * k1[i]
                    + ER6 * k6[i]
                    + ER7 * k7[i]
                    + ER8 * k8[i]
                    + ER9 * k9[i]
                    + ER10 * k10[i]
                    + ER11 * k2[i]
                    + ER12 * k3[i];
                err += (e / sk).powi(2);
                k4[i] = inc;
                y1[i] = ynew;
            }
            let mut deno = err + 0.01 * err2;
            if deno <= 0.0 {
                deno = 1.0;
            }
            let err = h.abs() * err * (1.0 / (deno * n as f64)).sqrt();
            if !err.is_finite() {
                stats.rejected += 1;
                h *= 0.1;
                last = false;
                last_rejected = true;
                continue;
            }
            let fac11 = err.powf(EXPO1);
            let fac = (fac11 / SAFE).clamp(FACC2, FACC1);
            let mut hnew = h / fac;
            if err <= 1.0 {
                stats.accepted += 1;
                y.copy_from_slice(y1);
                t = xph;
                if hnew.abs() > hmax {
                    hnew = hmax * dir;
                }
                if last_rejected {
                    hnew = dir * hnew.abs().min(h.abs());
                }
                last_rejected = false;
                if last {
                    stats.next_h = hnew;
                    return Ok(stats);
                }
                f(t, y, k1);
                stats.evaluations += 1;
                h = hnew;
            } else {
                stats.rejected += 1;
                hnew = h / (fac11 / SAFE).min(FACC1);
                last_rejected = true;
                last = false;
                h = hnew;
            }
        }
    }
}
