//! Choosing the cluster count each group's consensus targets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::max_weight_matching;
use crate::model::{Ensemble, PromptSpec};

use super::argmax;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetAssignment {
    /// Cluster count per group.
    pub targets: Vec<usize>,
    /// Category matched to each group; `None` when groups outnumber
    /// categories and the group fell back to its plurality category.
    pub categories: Vec<Option<usize>>,
    /// `votes[g][c]`: members of group `g` generated by prompts of category `c`.
    pub votes: Vec<Vec<usize>>,
}

/// Matches groups one-to-one to categories maximizing the total vote count.
/// Larger groups claim categories first on ties, then lower category indices.
pub fn assign_targets(
    groups: &[Vec<usize>],
    prompts: &PromptSpec,
    ensemble: &Ensemble,
    approximate: bool,
) -> Result<TargetAssignment> {
    let t = prompts.t();
    if groups.len() != t && !approximate {
        return Err(Error::GroupCountMismatch {
            expected: t,
            got: groups.len(),
        });
    }
    let members = ensemble.members();
    let mut votes = vec![vec![0usize; t]; groups.len()];
    for (g, group) in groups.iter().enumerate() {
        for &m in group {
            let member = members.get(m).ok_or(Error::LengthMismatch {
                left: members.len(),
                right: m + 1,
            })?;
            let c = prompts
                .category_of(&member.prompt_id)
                .ok_or_else(|| Error::UnknownPrompt(member.prompt_id.clone()))?;
            votes[g][c] += 1;
        }
    }

    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| groups[b].len().cmp(&groups[a].len()).then(a.cmp(&b)));
    let weights: Vec<Vec<f64>> = votes
        .iter()
        .map(|row| row.iter().map(|&v| v as f64).collect())
        .collect();
    let categories = max_weight_matching(&weights, &order)?;

    let targets = categories
        .iter()
        .zip(&weights)
        .map(|(matched, row)| {
            let c = matched.unwrap_or_else(|| argmax(row));
            prompts.categories[c].target_k
        })
        .collect();
    Ok(TargetAssignment {
        targets,
        categories,
        votes,
    })
}
