use std::fmt::Write;

use crate::ast::*;

/// Shortest text that lexes back to exactly `v`. `v` must be finite and
/// non-negative; negation is a separate AST node.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if v.fract() == 0.0 && a < 1e15 {
        format!("{}", v as i64)
    } else if (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary { op, .. } => op.precedence(),
        Expr::Neg { .. } => 3,
        _ => 4,
    }
}

fn write_expr(out: &mut String, e: &Expr, min_prec: u8) {
    let paren = precedence(e) < min_prec;
    if paren {
        out.push('(');
    }
    match e {
        Expr::Num { value, .. } => out.push_str(&format_number(*value)),
        Expr::Ident { name, .. } => out.push_str(name),
        Expr::Neg { inner, .. } => {
            out.push('-');
            write_expr(out, inner, 3);
        }
        Expr::Binary { op, lhs, rhs, .. } => {
            let p = op.precedence();
            write_expr(out, lhs, p);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(out, rhs, p + 1);
        }
        Expr::Call { func, args, .. } => {
            out.push_str(func.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, a, 0);
            }
            out.push(')');
        }
    }
    if paren {
        out.push(')');
    }
}

pub fn render_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

pub fn render_statement(s: &Statement) -> String {
    let mut out = s.target.clone();
    match &s.kind {
        StmtKind::Deterministic { expr } => {
            out.push_str(" = ");
            write_expr(&mut out, expr, 0);
        }
        StmtKind::Stochastic { dist, replicate } => {
            if let Some(n) = replicate {
                let _ = write!(out, "[{n}]");
            }
            let _ = write!(out, " ~ {}(", dist.name);
            for (i, a) in dist.args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                if let Some(name) = &a.name {
                    let _ = write!(out, "{name}=");
                }
                write_expr(&mut out, &a.value, 0);
            }
            out.push(')');
        }
    }
    out.push(';');
    out
}

/// Canonical text: one statement per line, two-space indentation.
pub fn render(p: &ModelProgram) -> String {
    let mut out = String::from("model {\n  data {\n");
    for d in &p.data_decls {
        let _ = writeln!(out, "    {}: {};", d.name, d.dtype);
    }
    out.push_str("  }\n  prior {\n");
    for s in &p.prior_stmts {
        let _ = writeln!(out, "    {}", render_statement(s));
    }
    out.push_str("  }\n  likelihood {\n");
    for s in &p.likelihood_stmts {
        let _ = writeln!(out, "    {}", render_statement(s));
    }
    out.push_str("  }\n}\n");
    out
}
