use serde::Serialize;

use super::{cv_closed_form, cv_income_slope, WelfareError};
use crate::hedonic::{PolicyChange, QuantileDemandModel};
use crate::paper::PaperConstants;
use crate::par::Execution;

/// Closed-form CV by τ (rows) and income (columns).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvTable {
    pub taus: Vec<f64>,
    pub y0s: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

pub fn cv_table(
    models: &[QuantileDemandModel],
    y0s: &[f64],
    change: &PolicyChange,
    exec: Execution,
) -> Result<CvTable, WelfareError> {
    if models.is_empty() || y0s.is_empty() {
        return Err(WelfareError::InvalidInput("CV table needs at least one model and one income".into()));
    }
    let cols = y0s.len();
    let cells = exec.map_range(models.len() * cols, |k| {
        cv_closed_form(&models[k / cols], change, y0s[k % cols]).map(|r| r.cv)
    });
    let flat = cells.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(CvTable {
        taus: models.iter().map(|m| m.tau).collect(),
        y0s: y0s.to_vec(),
        values: flat.chunks(cols).map(|c| c.to_vec()).collect(),
    })
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

/// Rows increase left to right and columns increase top to bottom.
fn monotone_grid(values: &[Vec<f64>]) -> (bool, bool) {
    let rows = values.iter().all(|r| strictly_increasing(r));
    let ncols = values.first().map_or(0, Vec::len);
    let cols = (0..ncols).all(|j| strictly_increasing(&values.iter().map(|r| r[j]).collect::<Vec<_>>()));
    (rows, cols)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Calibration {
    /// Incomes implied by inverting the median row at each target.
    pub y_columns: Vec<f64>,
    pub table: CvTable,
    pub targets: Vec<Vec<f64>>,
    pub residuals: Vec<Vec<f64>>,
    pub max_abs_residual: f64,
    pub all_positive: bool,
    pub rows_increase_in_income: bool,
    pub columns_increase_in_tau: bool,
    /// The same two patterns on the published decile table.
    pub decile_pattern_holds: bool,
}

impl Calibration {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_abs_residual <= tolerance
            && self.all_positive
            && self.rows_increase_in_income
            && self.columns_increase_in_tau
            && self.decile_pattern_holds
    }
}

/// Recovers the income columns behind the published quartile CV table from
/// its median row, which is affine in income, then recomputes every cell.
pub fn calibrate_to_paper(constants: &PaperConstants) -> Result<Calibration, WelfareError> {
    let models = constants.demand_models()?;
    let change = constants.policy_change()?;
    let targets = &constants.cv_quartiles;
    let mid = targets
        .taus
        .iter()
        .position(|&t| t == 0.5)
        .ok_or_else(|| WelfareError::InvalidInput("no median row in the CV targets".into()))?;
    let median = &models[mid];
    let intercept = cv_closed_form(median, &change, 0.0)?.cv;
    let slope = cv_income_slope(median, &change)?;
    let y_columns: Vec<f64> = targets.values[mid].iter().map(|t| (t - intercept) / slope).collect();
    let table = cv_table(&models, &y_columns, &change, Execution::Sequential)?;
    let residuals: Vec<Vec<f64>> = table
        .values
        .iter()
        .zip(&targets.values)
        .map(|(row, want)| row.iter().zip(want).map(|(a, b)| a - b).collect())
        .collect();
    let max_abs_residual = residuals.iter().flatten().fold(0.0f64, |m, r| m.max(r.abs()));
    let (rows_inc, cols_inc) = monotone_grid(&table.values);
    let (dec_rows, dec_cols) = monotone_grid(&constants.cv_deciles.values);
    Ok(Calibration {
        y_columns,
        all_positive: table.values.iter().flatten().all(|&v| v > 0.0),
        table,
        targets: targets.values.clone(),
        residuals,
        max_abs_residual,
        rows_increase_in_income: rows_inc,
        columns_increase_in_tau: cols_inc,
        decile_pattern_holds: dec_rows && dec_cols,
    })
}
