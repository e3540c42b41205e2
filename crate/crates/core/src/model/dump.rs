use std::fmt::Write;

use super::{FeatureKind, ModelProgram, StateKind, Ty};

/// Line-oriented, tab-separated model dump. Classes and features appear in
/// name order, states and actions in id order, so the output depends only
/// on the program.
///
/// ```text
/// template  CLASS  slot-count
/// slot      CLASS  index  name  kind
/// feature   CLASS  name  kind  formals  locals  init  final
/// state     CLASS  feature  id  kind  post-check  out-actions
/// action    CLASS  feature  id  kind  out-state  rendering
/// root      CLASS  procedure
/// ```
pub fn dump_model(program: &ModelProgram) -> String {
    let mut out = String::new();
    let ty_name = |t: Ty| match t {
        Ty::Int => "INTEGER".to_string(),
        Ty::Bool => "BOOLEAN".to_string(),
        Ty::Void => "NONE".to_string(),
        Ty::Ref { class, separate } => {
            format!("{}{}", if separate { "separate " } else { "" }, program.class(class).name)
        }
    };
    let decls = |xs: &[(String, Ty)]| {
        if xs.is_empty() {
            "-".to_string()
        } else {
            xs.iter().map(|(n, t)| format!("{n}:{}", ty_name(*t))).collect::<Vec<_>>().join(",")
        }
    };

    let mut classes: Vec<_> = program.classes.iter().collect();
    classes.sort_by(|a, b| a.name.cmp(&b.name));
    for class in classes {
        let _ = writeln!(out, "template\t{}\t{}", class.name, class.template.slots.len());
        for (i, (name, kind)) in class.template.slots.iter().enumerate() {
            let _ = writeln!(out, "slot\t{}\t{i}\t{name}\t{kind}", class.name);
        }
        for (name, &fid) in &class.features {
            let f = program.feature(fid);
            let kind = match f.kind {
                FeatureKind::Command => "command".to_string(),
                FeatureKind::Query(t) => format!("query({})", ty_name(t)),
            };
            let _ = writeln!(
                out,
                "feature\t{}\t{name}\t{kind}\t{}\t{}\t{}\t{}",
                class.name,
                decls(&f.formals),
                decls(&f.locals),
                f.init,
                f.final_state
            );
            for (si, s) in f.states.iter().enumerate() {
                let kind = match s.kind {
                    StateKind::Normal => "normal",
                    StateKind::Final => "final",
                    StateKind::PostconditionFail => "postcondition_fail",
                };
                let post = s.post_check.map_or("-".to_string(), |p| p.to_string());
                let outs = if s.out.is_empty() {
                    "-".to_string()
                } else {
                    s.out.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",")
                };
                let _ = writeln!(out, "state\t{}\t{name}\t{si}\t{kind}\t{post}\t{outs}", class.name);
            }
            for (ai, a) in f.actions.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "action\t{}\t{name}\t{ai}\t{}\t{}\t{}",
                    class.name,
                    a.kind.name(),
                    a.out,
                    program.render_action(fid, &a.kind)
                );
            }
        }
    }
    let root = program.feature(program.root);
    let _ = writeln!(out, "root\t{}\t{}", program.class(root.class).name, root.name);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::lower_sources;

    const FORK: &str = "class FORK create make feature make do end end";

    #[test]
    fn fork_has_zero_slots() {
        let p = lower_sources(&[("fork.e".into(), FORK.into())], &"FORK.make".parse().unwrap()).unwrap();
        let dump = dump_model(&p);
        assert!(dump.lines().any(|l| l == "template\tFORK\t0"));
        assert_eq!(dump, dump_model(&p));
    }

    #[test]
    fn one_template_record_per_class() {
        let files = vec![
            ("a.e".to_string(), "class A create make feature f: separate FORK make do end end".to_string()),
            ("b.e".to_string(), "class B end".to_string()),
            ("fork.e".to_string(), FORK.to_string()),
        ];
        let p = lower_sources(&files, &"A.make".parse().unwrap()).unwrap();
        let dump = dump_model(&p);
        assert_eq!(dump.lines().filter(|l| l.starts_with("template\t")).count(), 3);
    }
}
