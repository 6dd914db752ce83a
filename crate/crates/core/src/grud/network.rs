//! Forward pass with input/hidden decay and its hand-written BPTT.
//!
//! Per step, with δ in years and g the grid gap in years:
//!
//! ```text
//! γx = exp(-relu(wx ⊙ δ + bx))          x̂ = m x + (1-m)(γx x_last + (1-γx) x̃)
//! γh = exp(-relu(wh g + bh))            h̃ = γh ⊙ h_prev
//! z  = σ(Wzᵀ[x̂, h̃, m] + bz)            r = σ(Wrᵀ[x̂, h̃, m] + br)
//! c  = tanh(Wcᵀ[x̂, r ⊙ h̃, m] + bc)      h = (1-z) ⊙ h̃ + z ⊙ c
//! κ, λ = head(Woᵀ h + bo)
//! ```

use super::params::{sigmoid, GrudParameters, Tensor};
use crate::cohort::{EncodedSequence, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use crate::weibull::WeibullParams;
use rand::Rng;

/// exp(-relu(a)) and its derivative in `a`. The derivative at exactly 0 is
/// taken from the right so zero-initialised decay weights still learn.
#[inline]
fn decay_gate(a: f64) -> (f64, f64) {
    if a >= 0.0 {
        let g = (-a).exp();
        (g, -g)
    } else {
        (1.0, 0.0)
    }
}

/// Elementwise decay factors for the given elapsed times.
pub fn decay(w: &[f64], b: &[f64], elapsed_years: &[f64]) -> Vec<f64> {
    w.iter()
        .zip(b)
        .zip(elapsed_years)
        .map(|((w, b), d)| decay_gate(w * d + b).0)
        .collect()
}

/// Decay-to-mean imputation of one step.
pub fn impute(x: &[f64], m: &[f64], gamma: &[f64], last: &[f64], means: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|d| m[d] * x[d] + (1.0 - m[d]) * (gamma[d] * last[d] + (1.0 - gamma[d]) * means[d]))
        .collect()
}

/// Activations of every step, kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    steps: usize,
    dgx: Vec<f64>,
    xlast: Vec<f64>,
    xhat: Vec<f64>,
    gh: Vec<f64>,
    dgh: Vec<f64>,
    h_prev: Vec<f64>,
    htil: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    c: Vec<f64>,
    /// Head input: h after dropout scaling.
    head_in: Vec<f64>,
    drop_scale: Vec<f64>,
    dkappa_do: Vec<f64>,
    dlambda_do: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PredictionTrace {
    pub outputs: Vec<WeibullParams>,
    pub cache: Option<ForwardCache>,
}

/// Inverted dropout on the head input during training.
pub struct Dropout<'a, R: Rng> {
    pub rate: f64,
    pub rng: &'a mut R,
}

/// Runs the first `seq.valid_steps` steps.
pub fn forward(params: &GrudParameters, seq: &EncodedSequence, cache: bool) -> Result<PredictionTrace> {
    run::<rand_chacha::ChaCha8Rng>(params, seq, seq.valid_steps, cache, None)
}

/// Runs exactly `n_steps` steps regardless of follow-up.
pub fn forward_steps(params: &GrudParameters, seq: &EncodedSequence, n_steps: usize) -> Result<PredictionTrace> {
    run::<rand_chacha::ChaCha8Rng>(params, seq, n_steps.min(seq.n_steps), false, None)
}

pub fn forward_train<R: Rng>(
    params: &GrudParameters,
    seq: &EncodedSequence,
    dropout: Option<Dropout<'_, R>>,
) -> Result<PredictionTrace> {
    run(params, seq, seq.valid_steps, true, dropout)
}

fn run<R: Rng>(
    params: &GrudParameters,
    seq: &EncodedSequence,
    n_steps: usize,
    keep: bool,
    mut dropout: Option<Dropout<'_, R>>,
) -> Result<PredictionTrace> {
    let l = params.layout;
    let (nf, nh) = (l.n_features, l.hidden);
    if seq.n_features != nf {
        return Err(Error::InvalidInput(format!(
            "sequence has {} features, model expects {nf}",
            seq.n_features
        )));
    }
    let wx = params.get(Tensor::InputDecayW);
    let bx = params.get(Tensor::InputDecayB);
    let wh = params.get(Tensor::HiddenDecayW);
    let bh = params.get(Tensor::HiddenDecayB);
    let (wz, bz) = (params.get(Tensor::UpdateW), params.get(Tensor::UpdateB));
    let (wr, br) = (params.get(Tensor::ResetW), params.get(Tensor::ResetB));
    let (wc, bc) = (params.get(Tensor::CandidateW), params.get(Tensor::CandidateB));
    let (wo, bo) = (params.get(Tensor::HeadW), params.get(Tensor::HeadB));

    let mut cache = ForwardCache::default();
    if keep {
        let fv = || Vec::with_capacity(n_steps * nf);
        let hv = || Vec::with_capacity(n_steps * nh);
        cache = ForwardCache {
            steps: n_steps,
            dgx: fv(),
            xlast: fv(),
            xhat: fv(),
            gh: hv(),
            dgh: hv(),
            h_prev: hv(),
            htil: hv(),
            z: hv(),
            r: hv(),
            c: hv(),
            head_in: hv(),
            drop_scale: hv(),
            dkappa_do: Vec::with_capacity(n_steps),
            dlambda_do: Vec::with_capacity(n_steps),
        };
    }

    let mut last = seq.empirical_means.clone();
    let mut h = vec![0.0; nh];
    let mut dgx = vec![0.0; nf];
    let mut xhat = vec![0.0; nf];
    let mut gh = vec![0.0; nh];
    let mut dgh = vec![0.0; nh];
    let mut htil = vec![0.0; nh];
    let mut az = vec![0.0; nh];
    let mut ar = vec![0.0; nh];
    let mut ac = vec![0.0; nh];
    let mut rh = vec![0.0; nh];
    let mut head_in = vec![0.0; nh];
    let mut scale = vec![1.0; nh];
    let mut outputs = Vec::with_capacity(n_steps);

    for t in 0..n_steps {
        let x = seq.x_step(t);
        let m = seq.m_step(t);
        let delta = seq.delta_step(t);
        let gap = seq.gap_days[t] / DAYS_PER_YEAR;

        for d in 0..nf {
            let (g, dg) = decay_gate(wx[d] * (delta[d] / DAYS_PER_YEAR) + bx[d]);
            dgx[d] = dg;
            xhat[d] = m[d] * x[d] + (1.0 - m[d]) * (g * last[d] + (1.0 - g) * seq.empirical_means[d]);
        }
        for j in 0..nh {
            let (g, dg) = decay_gate(wh[j] * gap + bh[j]);
            gh[j] = g;
            dgh[j] = dg;
            htil[j] = g * h[j];
        }
        if keep {
            cache.dgx.extend_from_slice(&dgx);
            cache.xlast.extend_from_slice(&last);
            cache.xhat.extend_from_slice(&xhat);
            cache.gh.extend_from_slice(&gh);
            cache.dgh.extend_from_slice(&dgh);
            cache.h_prev.extend_from_slice(&h);
            cache.htil.extend_from_slice(&htil);
        }
        for d in 0..nf {
            if m[d] != 0.0 {
                last[d] = x[d];
            }
        }

        az.copy_from_slice(bz);
        ar.copy_from_slice(br);
        ac.copy_from_slice(bc);
        // Rows 0..F: x̂, F..F+H: h̃ (r ⊙ h̃ for the candidate), F+H..: m.
        for d in 0..nf {
            let v = xhat[d];
            let row = d * nh;
            for j in 0..nh {
                az[j] += v * wz[row + j];
                ar[j] += v * wr[row + j];
                ac[j] += v * wc[row + j];
            }
            let v = m[d];
            if v != 0.0 {
                let row = (nf + nh + d) * nh;
                for j in 0..nh {
                    az[j] += v * wz[row + j];
                    ar[j] += v * wr[row + j];
                    ac[j] += v * wc[row + j];
                }
            }
        }
        for k in 0..nh {
            let v = htil[k];
            let row = (nf + k) * nh;
            for j in 0..nh {
                az[j] += v * wz[row + j];
                ar[j] += v * wr[row + j];
            }
        }
        for j in 0..nh {
            ar[j] = sigmoid(ar[j]);
            rh[j] = ar[j] * htil[j];
        }
        for k in 0..nh {
            let v = rh[k];
            let row = (nf + k) * nh;
            for j in 0..nh {
                ac[j] += v * wc[row + j];
            }
        }
        for j in 0..nh {
            let z = sigmoid(az[j]);
            let c = ac[j].tanh();
            az[j] = z;
            ac[j] = c;
            h[j] = (1.0 - z) * htil[j] + z * c;
        }

        match dropout.as_mut() {
            Some(dp) if dp.rate > 0.0 => {
                let keep_p = 1.0 - dp.rate;
                for j in 0..nh {
                    scale[j] = if dp.rng.random::<f64>() < keep_p {
                        1.0 / keep_p
                    } else {
                        0.0
                    };
                }
            }
            _ => scale.fill(1.0),
        }
        let mut o = [bo[0], bo[1]];
        for j in 0..nh {
            head_in[j] = h[j] * scale[j];
            o[0] += head_in[j] * wo[2 * j];
            o[1] += head_in[j] * wo[2 * j + 1];
        }
        let (kappa, dk) = params.kappa_from(o[0]);
        let (lambda, dl) = params.lambda_from(o[1]);
        let out = WeibullParams::new(kappa, lambda).map_err(|_| Error::NonFinite {
            step: t,
            what: format!("head output κ={kappa}, λ={lambda}"),
        })?;
        outputs.push(out);
        if keep {
            cache.z.extend_from_slice(&az);
            cache.r.extend_from_slice(&ar);
            cache.c.extend_from_slice(&ac);
            cache.head_in.extend_from_slice(&head_in);
            cache.drop_scale.extend_from_slice(&scale);
            cache.dkappa_do.push(dk);
            cache.dlambda_do.push(dl);
        }
    }
    Ok(PredictionTrace {
        outputs,
        cache: keep.then_some(cache),
    })
}

/// Accumulates into `grad` the gradient of a loss whose partials in the
/// per-step outputs are `d_kappa[t]` and `d_lambda[t]`.
pub fn backward(
    params: &GrudParameters,
    seq: &EncodedSequence,
    cache: &ForwardCache,
    d_kappa: &[f64],
    d_lambda: &[f64],
    grad: &mut [f64],
) {
    let l = params.layout;
    let (nf, nh) = (l.n_features, l.hidden);
    let n_steps = cache.steps;
    assert_eq!(d_kappa.len(), n_steps);
    assert_eq!(d_lambda.len(), n_steps);
    assert_eq!(grad.len(), params.values.len());

    let wz = params.get(Tensor::UpdateW);
    let wr = params.get(Tensor::ResetW);
    let wc = params.get(Tensor::CandidateW);
    let wo = params.get(Tensor::HeadW);

    let r_wx = l.range(Tensor::InputDecayW);
    let r_bx = l.range(Tensor::InputDecayB);
    let r_wh = l.range(Tensor::HiddenDecayW);
    let r_bh = l.range(Tensor::HiddenDecayB);
    let r_wz = l.range(Tensor::UpdateW);
    let r_bz = l.range(Tensor::UpdateB);
    let r_wr = l.range(Tensor::ResetW);
    let r_br = l.range(Tensor::ResetB);
    let r_wc = l.range(Tensor::CandidateW);
    let r_bc = l.range(Tensor::CandidateB);
    let r_wo = l.range(Tensor::HeadW);
    let r_bo = l.range(Tensor::HeadB);

    let mut dh_next = vec![0.0; nh];
    let mut dh = vec![0.0; nh];
    let mut da_z = vec![0.0; nh];
    let mut da_r = vec![0.0; nh];
    let mut da_c = vec![0.0; nh];
    let mut dhtil = vec![0.0; nh];
    let mut drh = vec![0.0; nh];
    let mut dxhat = vec![0.0; nf];

    for t in (0..n_steps).rev() {
        let fs = t * nf..(t + 1) * nf;
        let hs = t * nh..(t + 1) * nh;
        let m = seq.m_step(t);
        let delta = seq.delta_step(t);
        let gap = seq.gap_days[t] / DAYS_PER_YEAR;
        let xhat = &cache.xhat[fs.clone()];
        let htil = &cache.htil[hs.clone()];
        let z = &cache.z[hs.clone()];
        let r = &cache.r[hs.clone()];
        let c = &cache.c[hs.clone()];
        let head_in = &cache.head_in[hs.clone()];
        let scale = &cache.drop_scale[hs.clone()];

        let do0 = d_kappa[t] * cache.dkappa_do[t];
        let do1 = d_lambda[t] * cache.dlambda_do[t];
        grad[r_bo.start] += do0;
        grad[r_bo.start + 1] += do1;
        for j in 0..nh {
            grad[r_wo.start + 2 * j] += head_in[j] * do0;
            grad[r_wo.start + 2 * j + 1] += head_in[j] * do1;
            dh[j] = (wo[2 * j] * do0 + wo[2 * j + 1] * do1) * scale[j] + dh_next[j];
        }

        for j in 0..nh {
            let dz = dh[j] * (c[j] - htil[j]);
            let dc = dh[j] * z[j];
            dhtil[j] = dh[j] * (1.0 - z[j]);
            da_z[j] = dz * z[j] * (1.0 - z[j]);
            da_c[j] = dc * (1.0 - c[j] * c[j]);
        }

        // Candidate: input [x̂, r ⊙ h̃, m].
        for j in 0..nh {
            grad[r_bc.start + j] += da_c[j];
        }
        for d in 0..nf {
            let row = d * nh;
            let mut acc = 0.0;
            for j in 0..nh {
                grad[r_wc.start + row + j] += xhat[d] * da_c[j];
                acc += wc[row + j] * da_c[j];
            }
            dxhat[d] = acc;
            if m[d] != 0.0 {
                let row = (nf + nh + d) * nh;
                for j in 0..nh {
                    grad[r_wc.start + row + j] += m[d] * da_c[j];
                }
            }
        }
        for k in 0..nh {
            let row = (nf + k) * nh;
            let rh = r[k] * htil[k];
            let mut acc = 0.0;
            for j in 0..nh {
                grad[r_wc.start + row + j] += rh * da_c[j];
                acc += wc[row + j] * da_c[j];
            }
            drh[k] = acc;
        }
        for k in 0..nh {
            let dr = drh[k] * htil[k];
            dhtil[k] += drh[k] * r[k];
            da_r[k] = dr * r[k] * (1.0 - r[k]);
        }

        // Update and reset gates: input [x̂, h̃, m].
        for j in 0..nh {
            grad[r_bz.start + j] += da_z[j];
            grad[r_br.start + j] += da_r[j];
        }
        for d in 0..nf {
            let row = d * nh;
            let mut acc = 0.0;
            for j in 0..nh {
                grad[r_wz.start + row + j] += xhat[d] * da_z[j];
                grad[r_wr.start + row + j] += xhat[d] * da_r[j];
                acc += wz[row + j] * da_z[j] + wr[row + j] * da_r[j];
            }
            dxhat[d] += acc;
            if m[d] != 0.0 {
                let row = (nf + nh + d) * nh;
                for j in 0..nh {
                    grad[r_wz.start + row + j] += m[d] * da_z[j];
                    grad[r_wr.start + row + j] += m[d] * da_r[j];
                }
            }
        }
        for k in 0..nh {
            let row = (nf + k) * nh;
            let mut acc = 0.0;
            for j in 0..nh {
                grad[r_wz.start + row + j] += htil[k] * da_z[j];
                grad[r_wr.start + row + j] += htil[k] * da_r[j];
                acc += wz[row + j] * da_z[j] + wr[row + j] * da_r[j];
            }
            dhtil[k] += acc;
        }

        // Hidden decay.
        let h_prev = &cache.h_prev[hs.clone()];
        let gh = &cache.gh[hs.clone()];
        let dgh = &cache.dgh[hs];
        for k in 0..nh {
            let da = dhtil[k] * h_prev[k] * dgh[k];
            grad[r_wh.start + k] += da * gap;
            grad[r_bh.start + k] += da;
            dh_next[k] = dhtil[k] * gh[k];
        }

        // Input decay; x_last and x̃ are data, so only γx carries gradient.
        let xlast = &cache.xlast[fs.clone()];
        let dgx = &cache.dgx[fs];
        for d in 0..nf {
            if m[d] == 1.0 {
                continue;
            }
            let dgamma = dxhat[d] * (1.0 - m[d]) * (xlast[d] - seq.empirical_means[d]);
            let da = dgamma * dgx[d];
            grad[r_wx.start + d] += da * (delta[d] / DAYS_PER_YEAR);
            grad[r_bx.start + d] += da;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_examples() {
        assert_eq!(decay(&[0.0], &[0.0], &[7.0]), vec![1.0]);
        assert_eq!(decay(&[1.0], &[0.0], &[0.0]), vec![1.0]);
        assert!(decay(&[1.0], &[0.0], &[800.0])[0] < 1e-300);
        assert!((decay(&[2.0], &[-1.0], &[1.0])[0] - (-1.0f64).exp()).abs() < 1e-16);
        assert_eq!(decay(&[1.0], &[-3.0], &[1.0]), vec![1.0]);
    }

    #[test]
    fn impute_examples() {
        let x = [5.0, 0.0, 0.0];
        let m = [1.0, 0.0, 0.0];
        let g = [0.3, 1.0, 0.0];
        let last = [1.0, 2.0, 3.0];
        let means = [9.0, 8.0, 7.0];
        assert_eq!(impute(&x, &m, &g, &last, &means), vec![5.0, 2.0, 7.0]);
    }
}
