//! Fault-free value semantics of the pure (non-memory, non-control)
//! instructions. Values are carried as `u64` masked to their type width.

use super::{BinOp, Opcode, Pred, Ty};

/// Error raised by a pure instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalError {
    DivideByZero,
}

fn sign_extend(v: u64, ty: Ty) -> i64 {
    let bits = ty.bits();
    if bits == 64 {
        v as i64
    } else {
        let shift = 64 - bits;
        ((v << shift) as i64) >> shift
    }
}

/// Shift amounts are taken modulo the type width.
pub fn eval_bin(op: BinOp, ty: Ty, a: u64, b: u64) -> Result<u64, EvalError> {
    let (a, b) = (a & ty.mask(), b & ty.mask());
    let r = match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::Udiv => {
            if b == 0 {
                return Err(EvalError::DivideByZero);
            }
            a / b
        }
        BinOp::And => a & b,
        BinOp::Or => a | b,
        BinOp::Xor => a ^ b,
        BinOp::Shl => a.wrapping_shl((b % ty.bits() as u64) as u32),
        BinOp::Lshr => a.wrapping_shr((b % ty.bits() as u64) as u32),
    };
    Ok(r & ty.mask())
}

pub fn eval_icmp(pred: Pred, ty: Ty, a: u64, b: u64) -> u64 {
    let (a, b) = (a & ty.mask(), b & ty.mask());
    let (sa, sb) = (sign_extend(a, ty), sign_extend(b, ty));
    let r = match pred {
        Pred::Eq => a == b,
        Pred::Ne => a != b,
        Pred::Ult => a < b,
        Pred::Ule => a <= b,
        Pred::Ugt => a > b,
        Pred::Uge => a >= b,
        Pred::Slt => sa < sb,
        Pred::Sle => sa <= sb,
        Pred::Sgt => sa > sb,
        Pred::Sge => sa >= sb,
    };
    r as u64
}

/// Evaluate a pure instruction from its operand values. Returns `None` for
/// opcodes that are not pure value computations.
pub fn eval_pure(opcode: Opcode, ty: Ty, ops: &[u64]) -> Option<Result<u64, EvalError>> {
    let v = match opcode {
        Opcode::Bin(op) => return Some(eval_bin(op, ty, ops[0], ops[1])),
        Opcode::Icmp(pred) => eval_icmp(pred, ty, ops[0], ops[1]),
        Opcode::Select => {
            if ops[0] & 1 != 0 {
                ops[1] & ty.mask()
            } else {
                ops[2] & ty.mask()
            }
        }
        Opcode::Trunc { .. } => ops[0] & ty.mask(),
        Opcode::Zext { from } => ops[0] & from.mask(),
        Opcode::PtrAdd => ops[0].wrapping_add(ops[1]),
        _ => return None,
    };
    Some(Ok(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wraps_to_width() {
        assert_eq!(eval_bin(BinOp::Add, Ty::I8, 250, 10), Ok(4));
        assert_eq!(eval_bin(BinOp::Sub, Ty::I32, 0, 1), Ok(0xffff_ffff));
        assert_eq!(eval_bin(BinOp::Mul, Ty::I64, 7, 5), Ok(35));
    }

    #[test]
    fn udiv_by_zero_is_an_error() {
        assert_eq!(
            eval_bin(BinOp::Udiv, Ty::I64, 1, 0),
            Err(EvalError::DivideByZero)
        );
    }

    #[test]
    fn shift_amount_is_modulo_width() {
        assert_eq!(eval_bin(BinOp::Shl, Ty::I8, 1, 9), Ok(2));
        assert_eq!(eval_bin(BinOp::Lshr, Ty::I64, 0x100, 68), Ok(0x10));
    }

    #[test]
    fn signed_compare_uses_type_width() {
        assert_eq!(eval_icmp(Pred::Slt, Ty::I8, 0xff, 0), 1);
        assert_eq!(eval_icmp(Pred::Ult, Ty::I8, 0xff, 0), 0);
        assert_eq!(eval_icmp(Pred::Sge, Ty::I32, 5, 5), 1);
    }
}
