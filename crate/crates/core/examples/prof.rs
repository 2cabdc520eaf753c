use phenn::net::*;
use std::time::Instant;
fn main() {
    let (params, arch) = build_phenn(&NetworkConfig::default()).unwrap();
    let x = Tensor::new([1,1,64,64], (0..4096).map(|i| ((i*7919)%1000) as f64/1000.0).collect()).unwrap();
    let reps = 30;
    let t = Instant::now();
    for _ in 0..reps { let mut tape = Tape::new(&params.tensors); let i = tape.input(x.clone()).unwrap(); arch.forward(&mut tape, i).unwrap(); }
    println!("forward {:?}", t.elapsed()/reps);
    let t = Instant::now();
    for _ in 0..reps {
        let mut tape = Tape::new(&params.tensors); let i = tape.input(x.clone()).unwrap(); let y = arch.forward(&mut tape, i).unwrap();
        let mut g = zero_gradients(&params.tensors);
        tape.backward(y, vec![1.0; 4096], &mut g);
    }
    println!("fwd+bwd {:?}", t.elapsed()/reps);
    // per conv timing
    let mut convs = vec![("stem", arch.stem.conv, 64)];
    for (i,b) in arch.down.iter().enumerate() { let s = 64 >> i; convs.push(("da", b.first.conv, s)); convs.push(("db", b.second.conv, s/2)); convs.push(("ds", b.shortcut, s)); }
    for (i,b) in arch.up.iter().enumerate() { let s = 16 << i; convs.push(("ua", b.first.conv, s)); convs.push(("ub", b.merge.conv, s)); convs.push(("us", b.shortcut, s)); }
    for b in &arch.tail { convs.push(("ra", b.first.conv, 64)); convs.push(("rb", b.second.conv, 64)); }
    convs.push(("head", arch.head, 64));
    let mut tf = 0.0; let mut tb = 0.0;
    for (name, spec, s) in convs {
        let xin = Tensor::new([1, spec.cin, s, s], (0..spec.cin*s*s).map(|i| (i%13) as f64).collect()).unwrap();
        let t = Instant::now();
        for _ in 0..reps { let mut tape = Tape::new(&params.tensors); let i = tape.input(xin.clone()).unwrap(); tape.conv(spec, i).unwrap(); }
        let f = t.elapsed().as_secs_f64()/reps as f64;
        let mut tape = Tape::new(&params.tensors); let i = tape.input(xin.clone()).unwrap(); let y = tape.conv(spec, i).unwrap();
        let len = tape.value(y).len();
        let t = Instant::now();
        for _ in 0..reps { let mut g = zero_gradients(&params.tensors); tape.backward(y, vec![1.0; len], &mut g); }
        let b = t.elapsed().as_secs_f64()/reps as f64;
        let macs = (len * spec.cin * spec.kernel * spec.kernel) as f64;
        println!("{name} {}->{} k{} s{} in{} : fwd {:.3}ms bwd {:.3}ms  {:.1} GF/s fwd", spec.cin, spec.cout, spec.kernel, spec.stride, s, f*1e3, b*1e3, 2.0*macs/f/1e9);
        tf += f; tb += b;
    }
    println!("conv total fwd {:.2}ms bwd {:.2}ms", tf*1e3, tb*1e3);
}
