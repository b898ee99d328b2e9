//! Collision boundary conditions evaluated on recorded events.

use serde::{Deserialize, Serialize};

use super::{Event, CONTACT_TOL};
use crate::geometry::closure_admissible;
use crate::pdf::PdfHandle;
use crate::{Error, HardSphereModel, NBodyConfig, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CbcMode {
    /// The outgoing value is the incoming value.
    PdfConserving,
    /// The outgoing value is the form evaluated at the outgoing state.
    Mcbc,
}

/// `(incoming, outgoing)` values of `form` at an event. The incoming value is
/// the form at `x_minus` (left continuity). Needs an event recorded with
/// `record_states`.
pub fn cbc_evaluate(
    event: &Event,
    form: &dyn Fn(&NBodyConfig, f64) -> f64,
    mode: CbcMode,
) -> Result<(f64, f64)> {
    let (Some(xm), Some(xp)) = (&event.x_minus, &event.x_plus) else {
        return Err(Error::InvalidArgument("event has no recorded N-body states".into()));
    };
    let incoming = form(xm, event.t);
    let outgoing = match mode {
        CbcMode::PdfConserving => incoming,
        CbcMode::Mcbc => form(xp, event.t),
    };
    Ok((incoming, outgoing))
}

/// Factorized N-body form `Theta^(N) prod_i rho_hat(x_i)`. The ensemble theta is
/// taken on the closure of the admissible set, i.e. as its one-sided limit from
/// admissible states: at a collision instant the pair is exactly at contact,
/// where the strong theta itself is 0 on both sides of the event.
pub fn factorized_form(rho_hat: PdfHandle, model: HardSphereModel) -> impl Fn(&NBodyConfig, f64) -> f64 {
    move |x: &NBodyConfig, t: f64| {
        if !closure_admissible(x, &model, CONTACT_TOL) {
            return 0.0;
        }
        x.points.iter().map(|p| rho_hat.density(p, t)).product()
    }
}
