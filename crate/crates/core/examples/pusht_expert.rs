//! Runs the scripted expert from one in-distribution and one
//! out-of-distribution reset and prints coverage along the way.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ocr::sim::{scripted_expert, ExpertConfig, PushT, Region, SimConfig};

fn main() -> ocr::Result<()> {
    let env = PushT::new(SimConfig::default())?;
    for (seed, region) in [(1, Region::Id), (2, Region::Ood)] {
        let mut s = env.reset(seed, region)?;
        let mut rng = ChaCha8Rng::seed_from_u64(s.rng_state);
        println!(
            "seed {seed} ({region}): block at ({:.1}, {:.1})",
            s.block_pose.x, s.block_pose.y
        );
        while !env.is_success(&s) && s.step_count < env.cfg.max_steps {
            let a = scripted_expert(&env, &s, &ExpertConfig::default(), &mut rng);
            s = env.step(&s, &a);
            if s.step_count % 50 == 0 {
                println!("  tick {:3}  coverage {:.3}", s.step_count, env.coverage(&s));
            }
        }
        println!(
            "  done after {} ticks, coverage {:.3}, success {}",
            s.step_count,
            env.coverage(&s),
            env.is_success(&s)
        );
    }
    Ok(())
}
