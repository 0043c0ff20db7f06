// SPDX-License-Identifier: MIT OR Apache-2.0

//! Independent reference computations used by the integration tests and the
//! acceptance suite. Nothing here calls into the library's metric or
//! gradient code.

#![allow(dead_code)]

use cbmw_core::nn::DenseNet;

/// Central finite-difference gradient of `loss` with respect to every
/// parameter of `net`, in `DenseNet::params` order.
pub fn fd_gradient(net: &DenseNet, h: f64, loss: impl Fn(&DenseNet) -> f64) -> Vec<f64> {
    let base = net.params();
    let mut probe = net.clone();
    let mut grad = Vec::with_capacity(base.len());
    let mut theta = base.clone();
    for i in 0..base.len() {
        theta[i] = base[i] + h;
        probe.set_params(&theta).unwrap();
        let up = loss(&probe);
        theta[i] = base[i] - h;
        probe.set_params(&theta).unwrap();
        let down = loss(&probe);
        theta[i] = base[i];
        grad.push((up - down) / (2.0 * h));
    }
    grad
}

/// `||a - b|| / max(||a|| + ||b||, tiny)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

/// Mutual information in bits by direct summation over the four cells of
/// the 2x2 joint table: sum P(a,b) log2(P(a,b) / (P(a) P(b))).
pub fn mi_eq3(a: &[u8], b: &[u8]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for u in 0..=1u8 {
        for v in 0..=1u8 {
            let joint = a.iter().zip(b).filter(|(x, y)| **x == u && **y == v).count() as f64 / n;
            let pa = a.iter().filter(|x| **x == u).count() as f64 / n;
            let pb = b.iter().filter(|y| **y == v).count() as f64 / n;
            if joint > 0.0 {
                total += joint * (joint / (pa * pb)).log2();
            }
        }
    }
    total
}

/// Entropy in bits of a binary sequence.
pub fn entropy_bits(a: &[u8]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let p = a.iter().filter(|x| **x == 1).count() as f64 / a.len() as f64;
    [p, 1.0 - p].iter().filter(|q| **q > 0.0).map(|q| -q * q.log2()).sum()
}

/// All binary sequences of length `n`, as bit patterns of `0..2^n`.
pub fn binary_sequences(n: usize) -> Vec<Vec<u8>> {
    (0..1u32 << n).map(|m| (0..n).map(|i| ((m >> i) & 1) as u8).collect()).collect()
}

/// Random leakage-audit instance: `(predicted rows, truth rows, y, specs)`.
/// Mixes binary and continuous concepts, and predictions that copy the
/// truth, copy the label, or are noise. Both label classes are present.
pub fn random_leakage_instance(
    rng: &mut impl rand::Rng,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<u8>, Vec<cbmw_core::schema::ConceptSpec>) {
    use cbmw_core::schema::{ConceptSource, ConceptSpec, ValueKind};
    let n = rng.random_range(4..80);
    let k = rng.random_range(1..5);
    let mut y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
    y[0] = 0;
    y[1] = 1;
    let specs: Vec<ConceptSpec> = (0..k)
        .map(|j| ConceptSpec {
            name: format!("c{j}"),
            kind: if rng.random_bool(0.5) { ValueKind::Binary } else { ValueKind::Continuous },
            source: ConceptSource::Tabular,
            group: None,
        })
        .collect();
    fn draw(rng: &mut impl rand::Rng, kind: ValueKind) -> f64 {
        match kind {
            ValueKind::Binary => f64::from(rng.random_range(0..2u8)),
            ValueKind::Continuous => rng.random_range(0.0..=1.0),
        }
    }
    let mut truth = vec![vec![0.0; k]; n];
    let mut pred = vec![vec![0.0; k]; n];
    for (j, spec) in specs.iter().enumerate() {
        let style = rng.random_range(0..4);
        for i in 0..n {
            truth[i][j] = draw(rng, spec.kind);
            pred[i][j] = match style {
                0 => truth[i][j],
                1 => f64::from(y[i]),
                2 => 0.5 * f64::from(y[i]) + 0.5 * truth[i][j],
                _ => draw(rng, spec.kind),
            };
        }
    }
    (pred, truth, y, specs)
}

/// Random intervention case: bottleneck, edits on distinct coordinates and a
/// symmetric unit-diagonal correlation matrix.
pub fn random_intervention_case(
    rng: &mut impl rand::Rng,
) -> (Vec<f64>, Vec<(usize, f64)>, Vec<Vec<f64>>) {
    let n = rng.random_range(1..12);
    let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
    let mut idx: Vec<usize> = (0..n).collect();
    let q = rng.random_range(0..=n.min(4));
    for i in 0..q {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let edits = idx[..q].iter().map(|&k| (k, rng.random_range(0.0..=1.0))).collect();
    let mut corr = vec![vec![0.0; n]; n];
    for i in 0..n {
        corr[i][i] = 1.0;
        for j in 0..i {
            let v = rng.random_range(-1.0..=1.0);
            corr[i][j] = v;
            corr[j][i] = v;
        }
    }
    (b, edits, corr)
}

/// Checks the algebraic invariants of both propagation modes on one case.
pub fn check_intervention_algebra(
    b: &[f64],
    edits: &[(usize, f64)],
    corr: &[Vec<f64>],
) -> Result<(), String> {
    use cbmw_core::intervene::{intervene_correlated, intervene_independent};
    let n = b.len();
    let edited = |j: usize| edits.iter().any(|&(k, _)| k == j);
    let ind = intervene_independent(b, edits).map_err(|e| e.to_string())?;
    let cor = intervene_correlated(b, edits, corr).map_err(|e| e.to_string())?;

    for &(k, v) in edits {
        if ind[k] != v || cor.values[k] != v {
            return Err(format!("edited coordinate {k} not set exactly"));
        }
    }
    for j in (0..n).filter(|&j| !edited(j)) {
        if ind[j] != b[j] {
            return Err(format!("independent edit moved coordinate {j}"));
        }
        let raw = b[j] + edits.iter().map(|&(k, v)| corr[j][k] * (v - b[k])).sum::<f64>();
        let want = raw.clamp(0.0, 1.0);
        if (cor.values[j] - want).abs() > 1e-12 {
            return Err(format!("coordinate {j}: {} vs {want}", cor.values[j]));
        }
        if cor.clamped.contains(&j) != !(0.0..=1.0).contains(&raw) {
            return Err(format!("clamp flag wrong on {j}"));
        }
    }
    if cor.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err("correlated value outside [0, 1]".into());
    }

    let mut zero = corr.to_vec();
    for (i, row) in zero.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if i != j {
                *v = 0.0;
            }
        }
    }
    let z = intervene_correlated(b, edits, &zero).map_err(|e| e.to_string())?;
    if z.values.iter().zip(&ind).any(|(a, c)| a.to_bits() != c.to_bits()) || !z.clamped.is_empty() {
        return Err("zero correlation differs from independent".into());
    }

    let noop: Vec<(usize, f64)> = edits.iter().map(|&(k, _)| (k, b[k])).collect();
    let same = intervene_correlated(b, &noop, corr).map_err(|e| e.to_string())?;
    if same.values != b || !same.clamped.is_empty() {
        return Err("zero-delta edit changed the bottleneck".into());
    }
    Ok(())
}
