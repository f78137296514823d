use crate::mode::Mode;
use serde::Serialize;

pub const DEFAULT_ZETA_MIN: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct DampingEntry {
    pub mode: Mode,
    /// ζ below the threshold.
    pub critical: bool,
    /// Negative decay: the oscillation grows.
    pub growing: bool,
}

/// Flags every oscillatory mode against `zeta_min`. Growing modes are kept
/// and flagged.
pub fn damping_report(modes: &[Mode], zeta_min: f64) -> Vec<DampingEntry> {
    modes
        .iter()
        .filter(|m| m.is_oscillatory())
        .map(|m| DampingEntry { mode: *m, critical: m.damping_ratio < zeta_min, growing: m.sigma < -1e-6 })
        .collect()
}

/// Modes found across several events, grouped by frequency proximity.
#[derive(Debug, Clone, Serialize)]
pub struct MatchedMode {
    pub freq_hz: f64,
    /// One entry per event; `None` where that event did not show the mode.
    pub per_event: Vec<Option<Mode>>,
}

/// Groups modes from several events whose frequencies lie within `tol_hz`
/// of a group's first member. Within an event the most energetic candidate wins.
pub fn match_modes(events: &[Vec<Mode>], tol_hz: f64) -> Vec<MatchedMode> {
    let mut groups: Vec<MatchedMode> = Vec::new();
    for (e, modes) in events.iter().enumerate() {
        let mut sorted: Vec<&Mode> = modes.iter().filter(|m| m.is_oscillatory()).collect();
        sorted.sort_by(|a, b| b.energy.total_cmp(&a.energy));
        for m in sorted {
            let hit = groups
                .iter_mut()
                .filter(|g| (g.freq_hz - m.freq_hz).abs() <= tol_hz)
                .min_by(|a, b| (a.freq_hz - m.freq_hz).abs().total_cmp(&(b.freq_hz - m.freq_hz).abs()));
            match hit {
                Some(g) if g.per_event[e].is_none() => g.per_event[e] = Some(*m),
                Some(_) => {}
                None => {
                    let mut per_event = vec![None; events.len()];
                    per_event[e] = Some(*m);
                    groups.push(MatchedMode { freq_hz: m.freq_hz, per_event });
                }
            }
        }
    }
    groups.sort_by(|a, b| a.freq_hz.total_cmp(&b.freq_hz));
    groups
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mode(f: f64, zeta: f64) -> Mode {
        let w = 2.0 * std::f64::consts::PI * f;
        Mode::new(f, crate::mode::sigma_for(w, zeta))
    }

    #[test]
    fn flags_low_damping() {
        let r = damping_report(&[mode(0.84, 0.034), mode(0.3, 0.12)], DEFAULT_ZETA_MIN);
        assert!(r[0].critical);
        assert!(!r[1].critical);
        assert!(damping_report(&[], DEFAULT_ZETA_MIN).is_empty());
    }

    #[test]
    fn growing_mode_kept_and_flagged() {
        let r = damping_report(&[Mode::new(0.5, -0.02)], DEFAULT_ZETA_MIN);
        assert!(r[0].growing && r[0].critical);
    }

    #[test]
    fn matches_across_events() {
        let ev = vec![vec![mode(0.24, 0.05), mode(0.84, 0.03)], vec![mode(0.27, 0.06)], vec![mode(0.83, 0.04)]];
        let g = match_modes(&ev, 0.05);
        assert_eq!(g.len(), 2);
        assert!(g[0].per_event[0].is_some() && g[0].per_event[1].is_some() && g[0].per_event[2].is_none());
        assert!(g[1].per_event[2].is_some());
    }
}
