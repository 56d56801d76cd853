use std::io::Write;
use std::time::Duration;

use crate::report::{csv_writer, fmt_float};
use crate::tasks::{worst_case_of, ParamVector};
use crate::weighting::WeightVector;

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub theta: ParamVector,
    /// Exact expected risks at `theta`.
    pub risks: Vec<f64>,
    /// Weights used for the step taken from `theta`.
    pub weights: WeightVector,
    pub worst_risk: f64,
    /// Norm of the weighted gradient.
    pub grad_norm: f64,
}

impl IterationRecord {
    pub(crate) fn new(
        k: usize,
        theta: ParamVector,
        risks: Vec<f64>,
        weights: WeightVector,
        grad_norm: f64,
    ) -> Self {
        let worst_risk = worst_case_of(&risks).value;
        Self {
            k,
            theta,
            risks,
            weights,
            worst_risk,
            grad_norm,
        }
    }

    pub fn avg_risk(&self) -> f64 {
        self.risks.iter().sum::<f64>() / self.risks.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    pub tasks: usize,
    /// Requested iteration count `K`.
    pub iterations: usize,
    pub seed: Option<u64>,
    pub step_size: f64,
    /// `θ̄_K = (1/K) Σ_{k<K} θ_k`.
    pub average: Option<ParamVector>,
    /// `θ_{K−1}`.
    pub last: Option<ParamVector>,
    /// Distance to the reference optimum, when the caller knows it.
    pub r0: Option<f64>,
    pub elapsed: Duration,
}

impl RunTrace {
    pub(crate) fn new(tasks: usize, iterations: usize, seed: Option<u64>, step_size: f64) -> Self {
        Self {
            records: Vec::with_capacity(iterations.min(1 << 16)),
            tasks,
            iterations,
            seed,
            step_size,
            average: None,
            last: None,
            r0: None,
            elapsed: Duration::ZERO,
        }
    }

    pub(crate) fn push(&mut self, record: IterationRecord) {
        self.records.push(record);
    }

    pub(crate) fn finish(&mut self, average: ParamVector, last: ParamVector, elapsed: Duration) {
        self.average = Some(average);
        self.last = Some(last);
        self.elapsed = elapsed;
    }

    /// Averaged iterate; present on every completed run.
    pub fn averaged(&self) -> &ParamVector {
        self.average.as_ref().expect("completed run")
    }

    pub fn final_theta(&self) -> &ParamVector {
        self.last.as_ref().expect("completed run")
    }

    pub fn gradient_evaluations(&self) -> usize {
        self.iterations * self.tasks
    }

    /// Writes `k, worst_risk, avg_risk, risk_1..risk_T, w_1..w_T, grad_norm`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut wtr = csv_writer(out);
        let mut header = vec!["k".to_string(), "worst_risk".into(), "avg_risk".into()];
        header.extend((1..=self.tasks).map(|t| format!("risk_{t}")));
        header.extend((1..=self.tasks).map(|t| format!("w_{t}")));
        header.push("grad_norm".into());
        wtr.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.k.to_string(), fmt_float(r.worst_risk), fmt_float(r.avg_risk())];
            row.extend(r.risks.iter().map(|&x| fmt_float(x)));
            row.extend(r.weights.as_slice().iter().map(|&x| fmt_float(x)));
            row.push(fmt_float(r.grad_norm));
            wtr.write_record(&row)?;
        }
        wtr.flush()
    }
}
