use criterion::{black_box, criterion_group, criterion_main, Criterion};
use deedchain::contracts::Rates;
use deedchain::scenario::generate::random_script;
use deedchain::scenario::{bundled, run_scenario, World};
use deedchain::store::ContentStore;
use deedchain::{digest, keypair_from_seed, AnchorChain};

fn crypto(c: &mut Criterion) {
    let pair = keypair_from_seed(b"bench-keypair-seed").unwrap();
    let msg = vec![7u8; 256];
    let sig = pair.sign(&msg);
    c.bench_function("keypair_from_seed", |b| b.iter(|| keypair_from_seed(black_box(b"bench-keypair-seed"))));
    c.bench_function("digest_4k", |b| b.iter(|| digest(black_box(&[1u8; 4096]))));
    c.bench_function("sign_256b", |b| b.iter(|| pair.sign(black_box(&msg))));
    c.bench_function("verify_256b", |b| b.iter(|| pair.public.verify(black_box(&msg), &sig)));
}

fn chain_and_store(c: &mut Criterion) {
    let script = bundled("happy_path").unwrap();
    let mut w = World::new(&script);
    for (e, a) in script.events.iter().zip(script.parse_actions().unwrap()) {
        w.step(e, a);
    }
    let text = w.chain.to_jsonl();
    let genesis = w.chain.genesis().clone();
    let chain = AnchorChain::from_jsonl(genesis.clone(), &text).unwrap();
    c.bench_function("chain_verify_happy_path", |b| b.iter(|| chain.verify().unwrap()));
    c.bench_function("chain_import_happy_path", |b| {
        b.iter(|| AnchorChain::from_jsonl(genesis.clone(), black_box(&text)).unwrap())
    });

    let mut store = ContentStore::new(World::store_operator("bench"));
    let blob = vec![3u8; 64 * 1024];
    let id = store.put(&blob);
    c.bench_function("store_put_64k", |b| b.iter(|| store.put(black_box(&blob))));
    c.bench_function("store_get_64k", |b| b.iter(|| store.get(black_box(&id)).unwrap()));
}

fn scenarios(c: &mut Criterion) {
    let happy = bundled("happy_path").unwrap();
    c.bench_function("run_happy_path", |b| b.iter(|| run_scenario(black_box(&happy)).unwrap()));
    let random = random_script(1, 40);
    c.bench_function("run_random_40", |b| b.iter(|| run_scenario(black_box(&random)).unwrap()));
    let rates = Rates::default();
    c.bench_function("fee_split", |b| b.iter(|| rates.split(black_box(1_234_567))));
}

criterion_group!(benches, crypto, chain_and_store, scenarios);
criterion_main!(benches);
