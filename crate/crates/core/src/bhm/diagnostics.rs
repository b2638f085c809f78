//! Split-R̂ and effective sample size over several chains.

/// Splits every chain in half, dropping the middle draw of odd lengths.
fn split(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

struct Moments {
    chains: Vec<Vec<f64>>,
    len: usize,
    w: f64,
    var_plus: f64,
}

fn moments(chains: &[&[f64]]) -> Option<Moments> {
    let chains = split(chains);
    let m = chains.len();
    let len = chains.iter().map(Vec::len).min()?;
    if m < 2 || len < 2 {
        return None;
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (len - 1) as f64)
        .collect();
    let w = mean(&vars);
    let grand = mean(&means);
    let b = len as f64 * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m - 1) as f64;
    let var_plus = (len - 1) as f64 / len as f64 * w + b / len as f64;
    if !(w > 0.0) {
        return None;
    }
    Some(Moments {
        chains,
        len,
        w,
        var_plus,
    })
}

/// Potential scale reduction on split chains; `NaN` for constant or too
/// short input.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    match moments(chains) {
        Some(m) => (m.var_plus / m.w).sqrt(),
        None => f64::NAN,
    }
}

fn autocovariance(x: &[f64], lag: usize) -> f64 {
    let mu = mean(x);
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - mu) * (x[i + lag] - mu)).sum::<f64>() / n as f64
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence
/// estimator on split chains; `NaN` for constant or too short input.
pub fn ess(chains: &[&[f64]]) -> f64 {
    let Some(m) = moments(chains) else {
        return f64::NAN;
    };
    let n = m.len;
    let rho = |t: usize| {
        let ac = m.chains.iter().map(|c| autocovariance(&c[..n], t)).sum::<f64>() / m.chains.len() as f64;
        // autocovariances use a 1/n normalization, W uses 1/(n−1)
        1.0 - (m.w * (n - 1) as f64 / n as f64 - ac) / m.var_plus
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    let total = (m.chains.len() * n) as f64;
    // antithetic chains can push tau below 1; cap the ESS at total·log10(total)
    total / tau.max(1.0 / total.log10())
}
