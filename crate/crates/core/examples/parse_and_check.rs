//! Parses two small instances and verifies candidate assignments against them.

use csp_portfolio::csp::{check_assignment, parse_instance, Assignment};

const CLAUSES: &str = "
(int x1 1 2) (int x2 1 4) (int x3 2 3)
(bool p)
(or p (<= (+ x1 x3) 4))
(or (not p) (<= (+ x3 (* -1 x1)) 0))
(or (<= x1 1) (<= (* 2 x2) 4))
";

const MIXED: &str = "
(int x1 1 2) (int x2 1 4) (int x3 2 3)
(imp (>= (+ x1 (* 2 x3)) 3) (and (< x1 x2) (<= x3 (+ x1 x2))))
(alldifferent x1 x2 x3)
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clauses = parse_instance(CLAUSES.as_bytes())?;
    let a = Assignment::new().with_bool("p", false).with_int("x1", 1).with_int("x2", 3).with_int("x3", 2);
    println!("clauses: {} constraints, assignment ok = {}", clauses.constraints.len(), check_assignment(&clauses, &a)?);

    let mixed = parse_instance(MIXED.as_bytes())?;
    for (name, x) in [("solution", [1, 2, 3]), ("duplicate", [1, 1, 3])] {
        let a = Assignment::new().with_int("x1", x[0]).with_int("x2", x[1]).with_int("x3", x[2]);
        println!("mixed {name} {x:?}: {}", check_assignment(&mixed, &a)?);
    }
    for c in &mixed.constraints {
        println!("  {} constraint", c.kind());
    }
    print!("\nround trip:\n{mixed}");
    Ok(())
}
