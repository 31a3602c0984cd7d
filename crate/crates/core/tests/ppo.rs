use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use windpath::curriculum::{DistanceClass, Strategy};
use windpath::experiment::train_strategy;
use windpath::ppo::adam::Adam;
use windpath::ppo::net::log_softmax;
use windpath::ppo::{actor_loss, critic_loss, gae, ActorBatch, Mlp, NetworkSpec, OdSchedule, TrainerConfig};
use windpath::scenario::Scenario;
use windpath::windfield::Direction;

fn spec(input: usize, output: usize) -> NetworkSpec {
    NetworkSpec {
        input,
        hidden: vec![8, 8],
        output,
        dropout: 0.0,
    }
}

#[test]
fn unclipped_single_epoch_gradient_is_vanilla_policy_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net = Mlp::<f64>::new(spec(5, 4), 1.0, &mut rng).unwrap();
    let n = 6;
    let obs: Vec<f64> = (0..n * 5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let actions: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
    let adv: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let logits = net.forward::<ChaCha8Rng>(&obs, n, None, None);
    let old: Vec<f64> = (0..n).map(|s| log_softmax(&logits[s * 4..(s + 1) * 4])[actions[s]]).collect();

    let mut grads = vec![0.0; net.param_count()];
    let batch = ActorBatch {
        obs: &obs,
        actions: &actions,
        old_log_probs: &old,
        advantages: &adv,
    };
    let l = actor_loss::<f64, ChaCha8Rng>(&net, batch, 1e9, 0.0, None, Some(&mut grads));
    let mean_adv = adv.iter().sum::<f64>() / n as f64;
    assert!((l.loss + mean_adv).abs() < 1e-12);

    let pg_objective = |m: &Mlp<f64>| {
        let lg = m.forward::<ChaCha8Rng>(&obs, n, None, None);
        -(0..n).map(|s| adv[s] * log_softmax(&lg[s * 4..(s + 1) * 4])[actions[s]]).sum::<f64>() / n as f64
    };
    let h = 1e-6;
    for i in 0..net.param_count() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + h;
        let up = pg_objective(&net);
        net.params_mut()[i] = orig - h;
        let down = pg_objective(&net);
        net.params_mut()[i] = orig;
        let fd = (up - down) / (2.0 * h);
        assert!((fd - grads[i]).abs() <= 1e-7 + 1e-5 * fd.abs(), "param {i}: {fd} vs {}", grads[i]);
    }
}

#[test]
fn critic_learns_values_of_a_deterministic_chain() {
    // s0 -(r=1)-> s1 -(r=2)-> end, gamma 0.9: V(s1) = 2, V(s0) = 2.8
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut net = Mlp::<f32>::new(spec(2, 1), 1.0, &mut rng).unwrap();
    let mut opt = Adam::new(net.param_count(), 1e-8);
    let obs = [1.0f32, 0.0, 0.0, 1.0];
    let rewards = [1.0, 2.0];
    let dones = [false, true];
    for _ in 0..1500 {
        let v = net.forward::<ChaCha8Rng>(&obs, 2, None, None);
        let values: Vec<f64> = v.iter().map(|&x| x as f64).collect();
        let (_, returns) = gae(&rewards, &values, &dones, 0.0, 0.9, 1.0);
        let ret: Vec<f32> = returns.iter().map(|&r| r as f32).collect();
        let mut g = vec![0.0f32; net.param_count()];
        critic_loss::<f32, ChaCha8Rng>(&net, &obs, &ret, None, Some(&mut g));
        opt.step(net.params_mut(), &g, 1e-2);
    }
    let v = net.forward::<ChaCha8Rng>(&obs, 2, None, None);
    assert!((v[0] - 2.8).abs() < 0.02, "{v:?}");
    assert!((v[1] - 2.0).abs() < 0.02, "{v:?}");
}

fn tiny_config(seed: u64) -> TrainerConfig {
    TrainerConfig {
        rollout_len: 128,
        minibatch: 32,
        epochs: 2,
        total_episodes: 150,
        hidden: vec![16, 16],
        seed,
        ..TrainerConfig::default()
    }
}

#[test]
fn training_is_bit_reproducible() {
    let s = Scenario::desk();
    let map = s.map().unwrap();
    let field = s.wind_field(&map, Direction::D0, 4.0).unwrap();
    let run = |seed| {
        train_strategy(&s, &map, &field, Strategy::All, tiny_config(seed), &s.od_pairs)
            .unwrap()
            .policy
            .to_bytes()
    };
    let a = run(11);
    assert_eq!(a, run(11));
    assert_ne!(a, run(12));
}

#[test]
fn training_log_respects_schedule_and_exclusions() {
    let s = Scenario::desk();
    let map = s.map().unwrap();
    let field = s.wind_field(&map, Direction::D0, 4.0).unwrap();
    let out = train_strategy(&s, &map, &field, Strategy::Energy, tiny_config(1), &s.od_pairs).unwrap();
    assert_eq!(out.episodes.len(), 150);
    for (i, e) in out.episodes.iter().enumerate() {
        assert_eq!(e.episode, i);
        assert!(!s.od_pairs.contains(&(e.origin, e.destination)));
        assert_eq!(e.class, e.stage);
    }
    assert!(out.updates.iter().all(|u| u.actor_lr <= 1e-4 && u.critic_lr <= 3e-4));
    assert!(out.updates.windows(2).all(|w| w[1].actor_lr <= w[0].actor_lr));

    let far = TrainerConfig {
        schedule: OdSchedule::Class(DistanceClass::Far),
        ..tiny_config(2)
    };
    let out = train_strategy(&s, &map, &field, Strategy::Time, far, &[]).unwrap();
    assert!(out.episodes.iter().all(|e| e.class == DistanceClass::Far));
    assert!(out.stage_events.is_empty());
}
