use vlga::chromosome::Chromosome;
use vlga::rng::seeded;
use vlga::search_space::SearchSpace;

/// Every chromosome of `phase`, built by walking the cartesian product of the
/// per-locus domains and writing genes one by one.
pub fn enumerate(space: &SearchSpace, phase: usize) -> Vec<Chromosome> {
    let template = Chromosome::random(space, phase, &mut seeded(0));
    let domains: Vec<_> = template.loci().map(|l| space.domain(l.slot.field())).collect();
    let mut out = Vec::new();
    let mut digits = vec![0usize; domains.len()];
    loop {
        let mut c = template.clone();
        for (i, &d) in digits.iter().enumerate() {
            c.set_gene(i, domains[i][d]).unwrap();
        }
        out.push(c);
        let mut i = 0;
        loop {
            if i == digits.len() {
                return out;
            }
            digits[i] += 1;
            if digits[i] < domains[i].len() {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}
