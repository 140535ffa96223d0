//! Vovk's aggregating algorithm for conditional density estimation under
//! log loss. Logarithms are natural.
//!
//! The learner predicts the posterior mean of the experts' forecasts, where
//! the posterior is the softmax of minus each expert's cumulative log loss.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::csv_err;

/// A finite set of experts mapping contexts to distributions over
/// `0..num_outcomes`.
pub trait ExpertSet {
    type Context: ?Sized;

    fn num_experts(&self) -> usize;
    fn num_outcomes(&self) -> usize;
    fn forecast(&self, expert: usize, context: &Self::Context) -> Result<Vec<f64>>;
}

/// Experts given as tables over integer contexts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableExperts {
    num_outcomes: usize,
    /// `tables[expert][context]`.
    tables: Vec<Vec<Vec<f64>>>,
}

impl TableExperts {
    pub fn new(num_outcomes: usize, tables: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let contexts = tables.first().map_or(0, Vec::len);
        if tables.is_empty() {
            return Err(Error::Parameter("no experts".into()));
        }
        for (i, t) in tables.iter().enumerate() {
            if t.len() != contexts {
                return Err(Error::Dimension(format!(
                    "expert {i} covers {} contexts",
                    t.len()
                )));
            }
            for row in t {
                if row.len() != num_outcomes {
                    return Err(Error::Dimension(format!(
                        "expert {i} row width {}",
                        row.len()
                    )));
                }
                let total: f64 = row.iter().sum();
                if row.iter().any(|p| p.is_nan() || *p < 0.0) || (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Parameter(format!(
                        "expert {i} row is not a distribution"
                    )));
                }
            }
        }
        Ok(TableExperts {
            num_outcomes,
            tables,
        })
    }

    pub fn num_contexts(&self) -> usize {
        self.tables[0].len()
    }

    /// The same experts in a different order: expert `k` of the result is
    /// expert `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        TableExperts {
            num_outcomes: self.num_outcomes,
            tables: perm.iter().map(|&k| self.tables[k].clone()).collect(),
        }
    }
}

impl ExpertSet for TableExperts {
    type Context = usize;

    fn num_experts(&self) -> usize {
        self.tables.len()
    }

    fn num_outcomes(&self) -> usize {
        self.num_outcomes
    }

    fn forecast(&self, expert: usize, context: &usize) -> Result<Vec<f64>> {
        self.tables[expert].get(*context).cloned().ok_or_else(|| {
            Error::Index(format!(
                "context {context} not below {}",
                self.num_contexts()
            ))
        })
    }
}

/// Experts computed by a closure `(expert, context) -> forecast`.
pub struct FnExperts<C: ?Sized, F> {
    num_experts: usize,
    num_outcomes: usize,
    f: F,
    _context: std::marker::PhantomData<fn(&C)>,
}

impl<C: ?Sized, F: Fn(usize, &C) -> Result<Vec<f64>>> FnExperts<C, F> {
    pub fn new(num_experts: usize, num_outcomes: usize, f: F) -> Self {
        FnExperts {
            num_experts,
            num_outcomes,
            f,
            _context: std::marker::PhantomData,
        }
    }
}

impl<C: ?Sized, F: Fn(usize, &C) -> Result<Vec<f64>>> ExpertSet for FnExperts<C, F> {
    type Context = C;

    fn num_experts(&self) -> usize {
        self.num_experts
    }

    fn num_outcomes(&self) -> usize {
        self.num_outcomes
    }

    fn forecast(&self, expert: usize, context: &C) -> Result<Vec<f64>> {
        (self.f)(expert, context)
    }
}

/// Cumulative losses of every expert and of the learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatorState {
    /// May be `+inf` once an expert gave probability 0 to an outcome.
    pub cum_losses: Vec<f64>,
    pub step: usize,
    pub learner_losses: Vec<f64>,
}

impl AggregatorState {
    pub fn new(num_experts: usize) -> Self {
        AggregatorState {
            cum_losses: vec![0.0; num_experts],
            step: 0,
            learner_losses: Vec::new(),
        }
    }

    /// Softmax of the negative cumulative losses. Uniform if every expert
    /// has infinite loss.
    pub fn posterior(&self) -> Vec<f64> {
        softmax_neg(&self.cum_losses)
    }

    /// Total learner loss minus the best expert's total loss.
    pub fn regret(&self) -> f64 {
        let learner: f64 = self.learner_losses.iter().sum();
        let best = self
            .cum_losses
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        learner - best
    }

    pub fn learner_loss_is_infinite(&self) -> bool {
        self.learner_losses.iter().any(|l| l.is_infinite())
    }
}

/// `exp(-l_i) / sum_j exp(-l_j)`, computed stably.
pub fn softmax_neg(losses: &[f64]) -> Vec<f64> {
    let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
    if min.is_infinite() {
        return vec![1.0 / losses.len() as f64; losses.len()];
    }
    let w: Vec<f64> = losses.iter().map(|l| (min - l).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

fn mix(posterior: &[f64], forecasts: &[Vec<f64>], num_outcomes: usize) -> Vec<f64> {
    let mut out = vec![0.0; num_outcomes];
    for (w, f) in posterior.iter().zip(forecasts) {
        if *w > 0.0 {
            for (o, p) in out.iter_mut().zip(f) {
                *o += w * p;
            }
        }
    }
    out
}

fn forecasts<E: ExpertSet>(experts: &E, context: &E::Context) -> Result<Vec<Vec<f64>>> {
    (0..experts.num_experts())
        .map(|i| {
            let f = experts.forecast(i, context)?;
            if f.len() != experts.num_outcomes() {
                return Err(Error::Dimension(format!(
                    "expert {i} forecast width {}",
                    f.len()
                )));
            }
            Ok(f)
        })
        .collect()
}

fn check_state<E: ExpertSet>(state: &AggregatorState, experts: &E) -> Result<()> {
    if state.cum_losses.len() != experts.num_experts() {
        return Err(Error::Dimension(format!(
            "state tracks {} experts, set has {}",
            state.cum_losses.len(),
            experts.num_experts()
        )));
    }
    Ok(())
}

/// Posterior-mean forecast.
pub fn predict<E: ExpertSet>(
    state: &AggregatorState,
    experts: &E,
    context: &E::Context,
) -> Result<Vec<f64>> {
    check_state(state, experts)?;
    let f = forecasts(experts, context)?;
    Ok(mix(&state.posterior(), &f, experts.num_outcomes()))
}

/// Record `outcome` at `context`. The learner's loss for the step is the
/// last entry of `learner_losses` and is infinite when every expert with
/// positive weight gave the outcome probability 0.
pub fn update<E: ExpertSet>(
    state: &AggregatorState,
    experts: &E,
    context: &E::Context,
    outcome: usize,
) -> Result<AggregatorState> {
    check_state(state, experts)?;
    if outcome >= experts.num_outcomes() {
        return Err(Error::Index(format!("outcome {outcome}")));
    }
    let f = forecasts(experts, context)?;
    let q = mix(&state.posterior(), &f, experts.num_outcomes());
    let mut next = state.clone();
    for (l, fi) in next.cum_losses.iter_mut().zip(&f) {
        *l += -fi[outcome].ln();
    }
    next.learner_losses.push(-q[outcome].ln());
    next.step += 1;
    Ok(next)
}

/// Total learner loss minus the best expert's total loss.
pub fn regret_against_experts(state: &AggregatorState) -> f64 {
    state.regret()
}

/// Total variation distance.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub context: usize,
    pub outcome: usize,
    pub prediction: Vec<f64>,
    pub learner_loss: f64,
    pub posterior: Vec<f64>,
}

/// Result of running the aggregator over a stream.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregatorRun {
    pub state: AggregatorState,
    pub trace: Vec<TraceRow>,
}

impl AggregatorRun {
    /// Columns: step, context, outcome, learner_loss, then one posterior
    /// column per expert (the posterior before the step's update).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let k = self.state.cum_losses.len();
        let mut header = vec![
            "step".to_string(),
            "context".into(),
            "outcome".into(),
            "learner_loss".into(),
        ];
        header.extend((0..k).map(|i| format!("posterior{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for row in &self.trace {
            let mut rec = vec![
                row.step.to_string(),
                row.context.to_string(),
                row.outcome.to_string(),
                row.learner_loss.to_string(),
            ];
            rec.extend(row.posterior.iter().map(|p| p.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }
}

/// Run over a stream of `(context, outcome)` pairs with integer contexts.
pub fn run_stream<E: ExpertSet<Context = usize>>(
    experts: &E,
    stream: &[(usize, usize)],
) -> Result<AggregatorRun> {
    let mut state = AggregatorState::new(experts.num_experts());
    let mut trace = Vec::with_capacity(stream.len());
    for &(context, outcome) in stream {
        let posterior = state.posterior();
        let prediction = predict(&state, experts, &context)?;
        state = update(&state, experts, &context, outcome)?;
        trace.push(TraceRow {
            step: state.step - 1,
            context,
            outcome,
            prediction,
            learner_loss: *state.learner_losses.last().expect("just pushed"),
            posterior,
        });
    }
    Ok(AggregatorRun { state, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_experts() -> TableExperts {
        TableExperts::new(2, vec![vec![vec![0.9, 0.1]], vec![vec![0.5, 0.5]]]).unwrap()
    }

    #[test]
    fn single_expert_prediction() {
        let e = TableExperts::new(3, vec![vec![vec![0.2, 0.3, 0.5]]]).unwrap();
        let s = AggregatorState::new(1);
        assert_eq!(predict(&s, &e, &0).unwrap(), vec![0.2, 0.3, 0.5]);
        let run = run_stream(&e, &[(0, 2), (0, 1)]).unwrap();
        assert!(run.state.regret().abs() < 1e-12);
    }

    #[test]
    fn identical_experts_keep_even_posterior() {
        let row = vec![0.3, 0.7];
        let e = TableExperts::new(2, vec![vec![row.clone()], vec![row.clone()]]).unwrap();
        let run = run_stream(&e, &[(0, 0), (0, 1), (0, 1)]).unwrap();
        assert_eq!(run.state.posterior(), vec![0.5, 0.5]);
        assert_eq!(predict(&run.state, &e, &0).unwrap(), row);
    }

    #[test]
    fn one_step_posterior() {
        let e = two_experts();
        let s = update(&AggregatorState::new(2), &e, &0, 0).unwrap();
        let post = s.posterior();
        assert!((post[0] - 0.9 / 1.4).abs() < 1e-12);
        assert!((post[1] - 0.5 / 1.4).abs() < 1e-12);
        assert!((post[0] - 0.642_857_142_857).abs() < 1e-9);
    }

    #[test]
    fn zero_probability_eliminates_expert() {
        let e = TableExperts::new(2, vec![vec![vec![1.0, 0.0]], vec![vec![0.5, 0.5]]]).unwrap();
        let s = update(&AggregatorState::new(2), &e, &0, 1).unwrap();
        assert_eq!(s.cum_losses[0], f64::INFINITY);
        assert_eq!(s.posterior(), vec![0.0, 1.0]);
        let s2 = update(&AggregatorState::new(2), &e, &0, 0).unwrap();
        assert_eq!(s2.cum_losses[0], 0.0);
    }

    #[test]
    fn infinite_learner_loss_is_flagged() {
        let e = TableExperts::new(2, vec![vec![vec![1.0, 0.0]], vec![vec![1.0, 0.0]]]).unwrap();
        let s = update(&AggregatorState::new(2), &e, &0, 1).unwrap();
        assert!(s.learner_loss_is_infinite());
        assert_eq!(s.posterior(), vec![0.5, 0.5]);
    }

    #[test]
    fn three_step_hand_computation() {
        let e = TableExperts::new(
            2,
            vec![
                vec![vec![0.9, 0.1], vec![0.2, 0.8]],
                vec![vec![0.5, 0.5], vec![0.6, 0.4]],
            ],
        )
        .unwrap();
        let run = run_stream(&e, &[(0, 0), (1, 1), (0, 1)]).unwrap();
        let l0 = -(0.9f64.ln()) - 0.8f64.ln() - 0.1f64.ln();
        let l1 = -(0.5f64.ln()) - 0.4f64.ln() - 0.5f64.ln();
        assert!((run.state.cum_losses[0] - l0).abs() < 1e-12);
        assert!((run.state.cum_losses[1] - l1).abs() < 1e-12);
        // Learner: q1 = 0.7; then posterior (0.9, 0.5)/1.4 on context 1.
        let w0: f64 = 0.9 / 1.4;
        let q2 = w0 * 0.8 + (1.0 - w0) * 0.4;
        let v0: f64 = 0.9 * 0.8;
        let v1 = 0.5 * 0.4;
        let q3 = (v0 * 0.1 + v1 * 0.5) / (v0 + v1);
        let learner = -(0.7f64.ln()) - q2.ln() - q3.ln();
        let total: f64 = run.state.learner_losses.iter().sum();
        assert!((total - learner).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let e = two_experts();
        let s = AggregatorState::new(2);
        assert!(predict(&s, &e, &1).is_err());
        assert!(update(&s, &e, &0, 2).is_err());
        assert!(predict(&AggregatorState::new(3), &e, &0).is_err());
    }

    #[test]
    fn regret_bound_for_eight_experts() {
        let tables = (0..8)
            .map(|i| {
                let p = (i as f64 + 0.5) / 8.0;
                vec![vec![p, 1.0 - p]]
            })
            .collect();
        let e = TableExperts::new(2, tables).unwrap();
        let stream: Vec<_> = (0..200).map(|t| (0, (t * 7 % 3 == 0) as usize)).collect();
        let run = run_stream(&e, &stream).unwrap();
        assert!(run.state.regret() <= 8f64.ln() + 1e-9);
    }

    #[test]
    fn closure_experts_match_tables() {
        let e = two_experts();
        let f = FnExperts::new(2, 2, |i, c: &usize| e.forecast(i, c));
        let s = update(&AggregatorState::new(2), &f, &0, 1).unwrap();
        let t = update(&AggregatorState::new(2), &e, &0, 1).unwrap();
        assert_eq!(s, t);
    }

    #[test]
    fn trace_csv() {
        let run = run_stream(&two_experts(), &[(0, 0), (0, 1)]).unwrap();
        let mut buf = Vec::new();
        run.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,context,outcome,learner_loss,posterior0,posterior1\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
