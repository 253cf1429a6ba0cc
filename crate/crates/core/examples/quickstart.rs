use byzsprt::{estimate_operating_point, AttackSpec, DetectorRule, Estimator, Model, Placement, Setup, Thresholds};

fn main() -> Result<(), byzsprt::Error> {
    let model = Model::gaussian("pair", -1.0, 1.0, 1.0)?;
    let k = model.info_constants()?;
    let setup = Setup::new(model, 10, DetectorRule::Voting { r: 8 }, AttackSpec::flip(2, Placement::Random))?;
    let point = estimate_operating_point(&setup, &Thresholds::symmetric(50.0)?, 20_000, 1, Estimator::Importance)?;
    println!(
        "alpha {:e}, E1[T] {}, gamma/I {:?}",
        point.alpha.value,
        point.asn1.mean,
        point.gamma().map(|g| g.value / k.i)
    );
    Ok(())
}
