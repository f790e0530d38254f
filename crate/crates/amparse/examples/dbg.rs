use amparse::corpus::{generate_corpus, GeneratorConfig};
use amparse::model::ModelConfig;
use amparse::preprocess::recat::RuleSet;
use amparse::preprocess::vocab::build_vocabulary;
use amparse::training::run::run_training;
use amparse::training::{StageMode, TrainConfig};

fn main() {
    let gen = GeneratorConfig::default();
    let (train, dev, _) = generate_corpus(&gen).unwrap();
    let rules = RuleSet::default();
    let vocab = build_vocabulary(&train, &rules, 5).unwrap();
    for mode in ["joint", "two_stage_tune_align", "two_stage", "factorized_align_ablation", "hard_hierarchical_loss_ablation"] {
        let m = StageMode::parse(mode).unwrap();
        let mut scores = vec![];
        for seed in [1u64, 2, 3] {
            let cfg = TrainConfig { epochs: 14, seed, ..TrainConfig::desk() }.with_mode(m);
            let t0 = std::time::Instant::now();
            let (_p, rep) = run_training(&train, &dev, &vocab, &rules, &ModelConfig::desk(), &cfg).unwrap();
            let best = rep.epochs.iter().find(|e| e.best).unwrap().dev_smatch;
            println!("  {mode} seed {seed}: {best:.4} in {:?}", t0.elapsed());
            scores.push(best);
        }
        scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!("{mode}: median {:.4} {:?}", scores[1], scores);
    }
}
