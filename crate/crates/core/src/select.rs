//! Rank-and-add curves and best-prefix selection.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::game::{Game, Utility};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub added_prompt_id: String,
    pub utility: f64,
}

/// Where a curve stopped early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFailure {
    pub k: usize,
    pub prompt_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub points: Vec<CurvePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<CurveFailure>,
}

impl Curve {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }
}

/// Player indices ordered by value descending, ties by ascending id.
pub fn rank(values: &[f64], ids: &[String]) -> Result<Vec<usize>> {
    if values.len() != ids.len() {
        return Err(Error::Shape { expected: ids.len(), got: values.len() });
    }
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::Domain(alloc::format!("value for {} is NaN", ids[i])));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| match values[b].partial_cmp(&values[a]) {
        Some(Ordering::Equal) | None => ids[a].cmp(&ids[b]),
        Some(o) => o,
    });
    Ok(order)
}

/// Evaluates the utility of each prefix of the value ranking.
///
/// An oracle failure ends the curve; the points computed so far are kept and
/// the failure is recorded at the offending `k`.
pub fn rank_add_curve<U: Utility>(values: &[f64], ids: &[String], game: &Game<U>) -> Result<Curve> {
    let n = game.players();
    if values.len() != n {
        return Err(Error::Shape { expected: n, got: values.len() });
    }
    let order = rank(values, ids)?;
    let mut coalition = Coalition::empty(n);
    let mut points = Vec::with_capacity(n);
    for (idx, &player) in order.iter().enumerate() {
        coalition.insert(player);
        match game.value(&coalition) {
            Ok(utility) => points.push(CurvePoint { k: idx + 1, added_prompt_id: ids[player].clone(), utility }),
            Err(e) => {
                let failure = CurveFailure { k: idx + 1, prompt_id: ids[player].clone(), message: e.to_string() };
                return Ok(Curve { points, failure: Some(failure) });
            }
        }
    }
    Ok(Curve { points, failure: None })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestPrefix {
    pub k: usize,
    pub utility: f64,
    pub prompt_ids: Vec<String>,
}

/// Smallest prefix attaining the curve's maximum utility.
pub fn best_prefix(curve: &[CurvePoint]) -> Result<BestPrefix> {
    let first = curve.first().ok_or_else(|| Error::Precondition("best prefix of an empty curve".into()))?;
    let mut best = first;
    for p in &curve[1..] {
        if p.utility > best.utility {
            best = p;
        }
    }
    let prompt_ids = curve.iter().take_while(|p| p.k <= best.k).map(|p| p.added_prompt_id.clone()).collect();
    Ok(BestPrefix { k: best.k, utility: best.utility, prompt_ids })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{EnsembleUtility, PredictionMatrix, Rule, TieRule, ValidationSet};
    use crate::error::OracleError;
    use crate::game::{shapley_exact, FnUtility};
    use alloc::format;
    use alloc::vec;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn point(k: usize, u: f64) -> CurvePoint {
        CurvePoint { k, added_prompt_id: format!("p{}", k - 1), utility: u }
    }

    #[test]
    fn adversarial_fixture_curve() {
        let rows = (0..6).map(|p| vec![usize::from(p >= 3); 10]).collect();
        let m = PredictionMatrix::hard(ids("p", 6), ids("x", 10), 2, rows).unwrap();
        let v = ValidationSet::new(ids("x", 10).into_iter().map(|i| (i, 0)).collect(), 2).unwrap();
        let game = Game::new(EnsembleUtility::new(&m, &v, Rule::Vote, TieRule::Abstain).unwrap(), 0.0);
        let sv = shapley_exact(&game, 20).unwrap();
        let order = rank(&sv.values, m.prompt_ids()).unwrap();
        assert!(order[..3].iter().all(|&p| p < 3));
        let curve = rank_add_curve(&sv.values, m.prompt_ids(), &game).unwrap();
        let us: Vec<f64> = curve.points.iter().map(|p| p.utility).collect();
        assert_eq!(us, vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!(curve.points.last().unwrap().utility, sv.u_full);
        let best = best_prefix(&curve.points).unwrap();
        assert_eq!((best.k, best.utility), (1, 1.0));
        assert_eq!(best.prompt_ids.len(), 1);
    }

    #[test]
    fn ties_break_by_id() {
        let names: Vec<String> = ["b", "c", "a"].iter().map(|s| s.to_string()).collect();
        assert_eq!(rank(&[1.0, 1.0, 1.0], &names).unwrap(), vec![2, 0, 1]);
        assert_eq!(rank(&[0.0, 2.0, 1.0], &names).unwrap(), vec![1, 2, 0]);
        assert!(rank(&[f64::NAN, 0.0, 0.0], &names).is_err());
        let game = Game::new(FnUtility::new(3, |_| 0.5), 0.0);
        let curve = rank_add_curve(&[1.0; 3], &names, &game).unwrap();
        let added: Vec<&str> = curve.points.iter().map(|p| p.added_prompt_id.as_str()).collect();
        assert_eq!(added, vec!["a", "b", "c"]);
        assert!(curve.points.iter().all(|p| p.utility == 0.5));
    }

    #[test]
    fn single_player() {
        let game = Game::new(FnUtility::new(1, |_| 0.25), 0.0);
        let curve = rank_add_curve(&[3.0], &ids("p", 1), &game).unwrap();
        assert_eq!(curve.points, vec![point(1, 0.25)]);
    }

    struct Failing;
    impl Utility for Failing {
        fn players(&self) -> usize {
            4
        }
        fn evaluate(&self, c: &Coalition) -> core::result::Result<f64, OracleError> {
            if c.len() == 3 {
                Err(OracleError::new("endpoint down"))
            } else {
                Ok(c.len() as f64)
            }
        }
    }

    #[test]
    fn oracle_failure_keeps_partial_curve() {
        let curve = rank_add_curve(&[4.0, 3.0, 2.0, 1.0], &ids("p", 4), &Game::new(Failing, 0.0)).unwrap();
        assert_eq!(curve.points.len(), 2);
        let f = curve.failure.unwrap();
        assert_eq!((f.k, f.prompt_id.as_str()), (3, "p2"));
        assert!(f.message.contains("endpoint down"));
    }

    #[test]
    fn best_prefix_rules() {
        let inc: Vec<_> = (1..=4).map(|k| point(k, k as f64)).collect();
        assert_eq!(best_prefix(&inc).unwrap().k, 4);
        let flat: Vec<_> = (1..=4).map(|k| point(k, 0.5)).collect();
        assert_eq!(best_prefix(&flat).unwrap().k, 1);
        let bumpy = vec![point(1, 0.2), point(2, 0.7), point(3, 0.4), point(4, 0.7)];
        let b = best_prefix(&bumpy).unwrap();
        assert_eq!((b.k, b.prompt_ids), (2, vec!["p0".to_string(), "p1".to_string()]));
        assert!(best_prefix(&[]).is_err());
    }
}
