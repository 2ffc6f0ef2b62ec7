//! Build a P2PKH payment, round-trip it through the wire format and check it
//! against the relay policy.

use std::error::Error;

use uweb::codec::{check_standard, op, txid, Amount, OutPoint, Script, Transaction, TxInput, TxOutput, Txid};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let script_sig = Script::builder().push_slice(&[0x30; 72]).push_slice(&[0x02; 33]).into_script();
    let tx = Transaction::new(
        vec![TxInput::new(OutPoint::new(Txid([1; 32]), 0), script_sig)],
        vec![
            TxOutput::new(Amount(50_000), Script::new_p2pkh(&[7; 20])),
            TxOutput::new(Amount::ZERO, Script::new_op_return(b"hello")),
        ],
    );
    let bytes = tx.serialize()?;
    let back = Transaction::deserialize(&bytes)?;
    assert_eq!(back, tx);
    println!("{} bytes, txid {}", bytes.len(), txid(&tx)?);

    // without prevouts the fee rules are skipped
    let report = check_standard(&tx, None);
    println!("standard: {}", report.violations.is_empty());

    let bad = Transaction::new(
        tx.inputs.clone(),
        vec![TxOutput::new(Amount(10), Script::builder().push_opcode(op::OP_1).into_script())],
    );
    for v in check_standard(&bad, None).violations {
        println!("violation {}: {}", v.rule, v.reason);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
