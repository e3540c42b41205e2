use std::collections::{BTreeMap, BTreeSet};

use super::LowerError;
use crate::ast::{BaseType, ClassAst, Span, TypeAnnot};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoutineSig {
    pub formals: Vec<(String, TypeAnnot)>,
    pub return_type: Option<TypeAnnot>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClassSymbols {
    pub attributes: Vec<(String, TypeAnnot)>,
    pub routines: BTreeMap<String, RoutineSig>,
    pub creation_procedures: BTreeSet<String>,
}

impl ClassSymbols {
    pub fn attribute(&self, name: &str) -> Option<(usize, &TypeAnnot)> {
        self.attributes.iter().enumerate().find(|(_, (n, _))| n == name).map(|(i, (_, t))| (i, t))
    }
}

/// Typing information for every class, gathered before any body is lowered.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SymbolTable {
    pub classes: BTreeMap<String, ClassSymbols>,
    /// Class names in input order.
    pub order: Vec<String>,
}

pub fn collect_signatures(classes: &[ClassAst]) -> Result<SymbolTable, LowerError> {
    let known: BTreeSet<&str> = classes.iter().map(|c| c.name.as_str()).collect();
    let check = |ty: &TypeAnnot, span: Span| match &ty.base {
        BaseType::Class(name) if !known.contains(name.as_str()) => {
            Err(LowerError::UnknownType { location: span, name: name.clone() })
        }
        _ => Ok(()),
    };

    let mut table = SymbolTable::default();
    for class in classes {
        let mut sym = ClassSymbols::default();
        for (name, ty) in &class.attributes {
            check(ty, class.span)?;
            sym.attributes.push((name.clone(), ty.clone()));
        }
        for f in &class.features {
            for (_, ty) in f.formals.iter().chain(&f.locals) {
                check(ty, f.span)?;
            }
            if let Some(ty) = &f.return_type {
                check(ty, f.span)?;
            }
            sym.routines.insert(
                f.name.clone(),
                RoutineSig { formals: f.formals.clone(), return_type: f.return_type.clone() },
            );
        }
        sym.creation_procedures = class.creation_procedures.iter().cloned().collect();
        table.order.push(class.name.clone());
        table.classes.insert(class.name.clone(), sym);
    }
    Ok(table)
}
