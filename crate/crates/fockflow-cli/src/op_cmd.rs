//! `fockflow op`: normal ordering, reduction, null tests and rewrites on
//! operator text. Results go to stdout only.

use clap::{Args, Subcommand, ValueEnum};
use fockflow::ecs::reify_4d_rule;
use fockflow::ops::{
    apply_rewrite, parse_momentum_op, parse_op, reduce, Label, OperatorPoly, Pairing, RewriteRule,
};

use crate::{input_err, CmdResult};

#[derive(Args, Debug)]
pub struct OpArgs {
    #[command(subcommand)]
    pub action: OpAction,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PairingArg {
    Real,
    Conjugate,
}

impl From<PairingArg> for Pairing {
    fn from(p: PairingArg) -> Self {
        match p {
            PairingArg::Real => Pairing::Real,
            PairingArg::Conjugate => Pairing::Conjugate,
        }
    }
}

#[derive(Args, Debug)]
pub struct ExprArgs {
    /// Labels are momenta like `a(p-q)` instead of slot indices.
    #[arg(long)]
    pub momentum: bool,
    pub expr: String,
}

#[derive(Subcommand, Debug)]
pub enum OpAction {
    /// Canonical normal-ordered form.
    NormalOrder(ExprArgs),
    /// Paired annihilation-only form.
    Reduce {
        #[arg(long, value_enum, default_value = "real")]
        pairing: PairingArg,
        #[command(flatten)]
        expr: ExprArgs,
    },
    /// NULL when the reduced form vanishes.
    Null {
        #[arg(long, value_enum, default_value = "real")]
        pairing: PairingArg,
        #[command(flatten)]
        expr: ExprArgs,
    },
    /// Substitute letters by a named rule, then normal-order.
    Rewrite {
        /// identity shalf reify1 mix2 kg reify-lower mix-lower mix-raise,
        /// or reify4d / reify4d-negated for momentum labels.
        #[arg(long)]
        rule: String,
        #[command(flatten)]
        expr: ExprArgs,
    },
}

fn rule(name: &str) -> CmdResult<RewriteRule> {
    match name {
        "reify4d" => Ok(reify_4d_rule(false)),
        "reify4d-negated" => Ok(reify_4d_rule(true)),
        _ => RewriteRule::from_name(name).ok_or_else(|| input_err(format!("unknown rewrite rule `{name}`"))),
    }
}

fn act<L: Label>(action: &OpAction, p: OperatorPoly<L>) -> CmdResult<String> {
    Ok(match action {
        OpAction::NormalOrder(_) => p.normal_order().to_string(),
        OpAction::Reduce { pairing, .. } => reduce(&p, (*pairing).into())?.to_string(),
        OpAction::Null { pairing, .. } => {
            let r = reduce(&p, (*pairing).into())?;
            if r.is_zero() {
                "NULL (reduced: 0)".to_string()
            } else {
                format!("NOT NULL (reduced: {r})")
            }
        }
        OpAction::Rewrite { rule: name, .. } => apply_rewrite(&p, &rule(name)?)?.normal_order().to_string(),
    })
}

pub fn run(a: &OpArgs) -> CmdResult {
    let e = match &a.action {
        OpAction::NormalOrder(e) => e,
        OpAction::Reduce { expr, .. } | OpAction::Null { expr, .. } | OpAction::Rewrite { expr, .. } => expr,
    };
    let text = if e.momentum {
        act(&a.action, parse_momentum_op(&e.expr)?)?
    } else {
        act(&a.action, parse_op(&e.expr)?)?
    };
    println!("{text}");
    Ok(())
}
