use criterion::{criterion_group, criterion_main, Criterion};

use roinet::classifier::{attention_forward, loss_and_grads, ModelConfig, ModelParams};
use roinet::embedding::{pca_embed, tsne_embed, TsneParams};
use roinet::fcn::{build_fcn, mapper_graph, pearson_matrix, FcnConfig, FcnMethod, MapperParams};
use roinet::lsirm::{mcmc_run, random_truth, simulate_responses, SamplerConfig};
use roinet::rng::rng_from_seed;

use roinet_bench::{adjacency, recording};

fn fcn(c: &mut Criterion) {
    let rec = recording(116, 200);
    c.bench_function("pearson_116", |b| b.iter(|| pearson_matrix(&rec).unwrap()));
    c.bench_function("pca_116", |b| b.iter(|| pca_embed(rec.signal().view()).unwrap()));
    let mut g = c.benchmark_group("embedding");
    g.sample_size(10);
    g.bench_function("tsne_116", |b| b.iter(|| tsne_embed(rec.signal().view(), &TsneParams::default(), 1).unwrap()));
    let emb = tsne_embed(rec.signal().view(), &TsneParams::default(), 1).unwrap();
    g.bench_function("mapper_116", |b| b.iter(|| mapper_graph(&emb, &MapperParams::default()).unwrap()));
    g.bench_function("build_fcn_tsne_116", |b| b.iter(|| build_fcn(&rec, &FcnConfig::new(FcnMethod::Tsne), 1).unwrap()));
    g.finish();
}

fn classifier(c: &mut Criterion) {
    let cfg = ModelConfig { n_heads: 16, ..ModelConfig::default() };
    let params = ModelParams::init(116, &cfg, &mut rng_from_seed(1));
    let x = adjacency(116);
    let mut g = c.benchmark_group("classifier");
    g.sample_size(10);
    g.bench_function("forward_116_h16", |b| b.iter(|| attention_forward(&params, x.view()).unwrap()));
    g.bench_function("loss_and_grads_116_h16", |b| b.iter(|| loss_and_grads(&params, &[(x.view(), 1)]).unwrap()));
    g.finish();
}

fn lsirm(c: &mut Criterion) {
    let truth = random_truth(40, 29, 0.1, 1.0, 1.0, 1);
    let data = simulate_responses(&truth, 2).unwrap();
    let cfg = SamplerConfig { n_iter: 1000, burn_in: 500, thin: 10, ..SamplerConfig::default() };
    let mut g = c.benchmark_group("lsirm");
    g.sample_size(10);
    g.bench_function("mcmc_1000_sweeps_40x29", |b| b.iter(|| mcmc_run(&data, &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, fcn, classifier, lsirm);
criterion_main!(benches);
