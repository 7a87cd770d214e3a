//! Q-table rearrangement for inspection: put the states an optimal agent
//! walks through at the top, and order action columns by how much value
//! they ever accumulate, worst first. The interesting cells end up in one
//! corner instead of scattered.

use crate::agent::QTable;

/// Render `q` as CSV with rows reordered so `priority_states` (typically
/// the oracle's optimal-path states) come first, and columns stably sorted
/// by their maximum value, ascending.
pub fn heatmap_csv(q: &QTable, priority_states: &[String]) -> String {
    let mut rows: Vec<usize> = Vec::with_capacity(q.states().len());
    for label in priority_states {
        if let Some(i) = q.state_index(label) {
            if !rows.contains(&i) {
                rows.push(i);
            }
        }
    }
    for i in 0..q.states().len() {
        if !rows.contains(&i) {
            rows.push(i);
        }
    }

    let n_actions = q.actions().len();
    let mut columns: Vec<usize> = (0..n_actions).collect();
    let column_max = |a: usize| {
        (0..q.states().len())
            .map(|s| q.value(s, a))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    columns.sort_by(|a, b| {
        column_max(*a)
            .partial_cmp(&column_max(*b))
            .expect("q-values are never NaN")
    });

    let mut out = String::from("state");
    for a in &columns {
        out.push(',');
        out.push_str(&q.actions()[*a]);
    }
    out.push('\n');
    for s in rows {
        out.push_str(&q.states()[s]);
        for a in &columns {
            out.push_str(&format!(",{}", q.value(s, *a)));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_follow_the_path_and_columns_follow_value() {
        let mut q = QTable::new(
            vec!["start".into(), "+color".into(), "+bright".into()],
            vec!["a".into(), "b".into(), "c".into()],
        );
        // Column maxima: a → 5, b → −1, c → 2.
        q.set(0, 0, 5.0);
        q.set(1, 1, -1.0);
        q.set(2, 1, -3.0);
        q.set(2, 2, 2.0);
        let csv = heatmap_csv(&q, &["+bright".to_string(), "start".to_string()]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "state,b,c,a");
        assert!(lines[1].starts_with("+bright,"));
        assert!(lines[2].starts_with("start,"));
        assert!(lines[3].starts_with("+color,"));
        assert_eq!(lines[1], "+bright,-3,2,0");
    }

    #[test]
    fn unknown_priority_labels_are_ignored() {
        let q = QTable::new(vec!["s".into()], vec!["a".into()]);
        let csv = heatmap_csv(&q, &["missing".to_string()]);
        assert_eq!(csv, "state,a\ns,0\n");
    }

    #[test]
    fn column_order_is_stable_on_ties() {
        let q = QTable::new(
            vec!["s".into()],
            vec!["z".into(), "y".into(), "x".into()],
        );
        // All-zero table: ties keep dictionary order.
        let csv = heatmap_csv(&q, &[]);
        assert!(csv.starts_with("state,z,y,x\n"));
    }
}
