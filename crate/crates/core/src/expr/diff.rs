//! Symbolic differentiation with light constant folding.

use super::{BinOp, Expr, ExprError, Func, Var};

pub(super) fn differentiate(e: &Expr, var: Var) -> Result<Expr, ExprError> {
    if var == Var::Pi {
        return Err(ExprError::NotDifferentiable("pi is a constant".into()));
    }
    d(e, var)
}

fn d(e: &Expr, var: Var) -> Result<Expr, ExprError> {
    if !e.depends_on(var) {
        // also skips min/max/abs subtrees that do not involve `var`
        return Ok(Expr::Const(0.0));
    }
    Ok(match e {
        Expr::Const(_) => Expr::Const(0.0),
        Expr::Var(v) => Expr::Const(if *v == var { 1.0 } else { 0.0 }),
        Expr::Neg(a) => neg(d(a, var)?),
        Expr::Binary(op, l, r) => match op {
            BinOp::Add => add(d(l, var)?, d(r, var)?),
            BinOp::Sub => sub(d(l, var)?, d(r, var)?),
            BinOp::Mul => add(
                mul(d(l, var)?, (**r).clone()),
                mul((**l).clone(), d(r, var)?),
            ),
            BinOp::Div => div(
                sub(
                    mul(d(l, var)?, (**r).clone()),
                    mul((**l).clone(), d(r, var)?),
                ),
                pow((**r).clone(), Expr::Const(2.0)),
            ),
            BinOp::Pow => {
                if r.depends_on(var) {
                    return Err(ExprError::VariableExponent(var));
                }
                // d(a^c) = c * a^(c-1) * a'
                let exponent = (**r).clone();
                let reduced = sub(exponent.clone(), Expr::Const(1.0));
                mul(mul(exponent, pow((**l).clone(), reduced)), d(l, var)?)
            }
        },
        Expr::Call(f, args) => {
            let a = &args[0];
            let inner = d(a, var)?;
            let outer = match f {
                Func::Sin => call(Func::Cos, a.clone()),
                Func::Cos => neg(call(Func::Sin, a.clone())),
                Func::Exp => call(Func::Exp, a.clone()),
                Func::Sqrt => div(
                    Expr::Const(1.0),
                    mul(Expr::Const(2.0), call(Func::Sqrt, a.clone())),
                ),
                Func::Abs => call(Func::Sign, a.clone()),
                Func::Min | Func::Max => {
                    return Err(ExprError::NotDifferentiable(format!(
                        "{} is not differentiable",
                        f.name()
                    )))
                }
                Func::Sign => {
                    return Err(ExprError::NotDifferentiable(
                        "second derivative of abs".into(),
                    ))
                }
            };
            mul(outer, inner)
        }
    })
}

fn constant(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(c) => Some(*c),
        _ => None,
    }
}

/// Folds `op(a, b)` when both sides are constants and the result is finite.
fn fold(op: BinOp, a: &Expr, b: &Expr) -> Option<Expr> {
    let (x, y) = (constant(a)?, constant(b)?);
    let v = op.apply(x, y);
    v.is_finite().then_some(Expr::Const(v))
}

fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
    Expr::Binary(op, Box::new(a), Box::new(b))
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    if let Some(e) = fold(BinOp::Add, &a, &b) {
        return e;
    }
    match (constant(&a), constant(&b)) {
        (Some(z), _) if z == 0.0 => b,
        (_, Some(z)) if z == 0.0 => a,
        _ => binary(BinOp::Add, a, b),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    if let Some(e) = fold(BinOp::Sub, &a, &b) {
        return e;
    }
    match (constant(&a), constant(&b)) {
        (Some(z), _) if z == 0.0 => neg(b),
        (_, Some(z)) if z == 0.0 => a,
        _ => binary(BinOp::Sub, a, b),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    if let Some(e) = fold(BinOp::Mul, &a, &b) {
        return e;
    }
    match (constant(&a), constant(&b)) {
        (Some(z), _) | (_, Some(z)) if z == 0.0 => Expr::Const(0.0),
        (Some(one), _) if one == 1.0 => b,
        (_, Some(one)) if one == 1.0 => a,
        (Some(m), _) if m == -1.0 => neg(b),
        (_, Some(m)) if m == -1.0 => neg(a),
        _ => binary(BinOp::Mul, a, b),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if let Some(e) = fold(BinOp::Div, &a, &b) {
        return e;
    }
    match (constant(&a), constant(&b)) {
        (Some(z), _) if z == 0.0 => Expr::Const(0.0),
        (_, Some(one)) if one == 1.0 => a,
        _ => binary(BinOp::Div, a, b),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    if let Some(e) = fold(BinOp::Pow, &a, &b) {
        return e;
    }
    match constant(&b) {
        Some(one) if one == 1.0 => a,
        Some(z) if z == 0.0 => Expr::Const(1.0),
        _ => binary(BinOp::Pow, a, b),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, vec![a])
}
