// Serial-reference vs OpenMP timings for the three batch kernels: dataset
// rendering, one training epoch, evaluation. Also asserts that both modes
// produce bit-identical results, which is the whole point of the chunked
// reduction scheme.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>

#include "deepstruct/checksum.hpp"
#include "deepstruct/data.hpp"
#include "deepstruct/learning.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace deepstruct;

namespace {

template <class Fn>
double ms(Fn&& fn) {
  auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::uint32_t params_crc(const ParamStore& ps) {
  std::uint32_t c = 0;
  for (const auto& t : ps.value)
    c = crc32(t.v.data(), t.v.size() * sizeof(double), c);
  return c;
}

const char* kSpec = R"(
[network]
input = x 784
output = scores
node = h1 affine x unary.W1:64x784 unary.b1:64
node = r1 relu h1
node = scores affine r1 unary.W2:26x64 unary.b2:26

[graph]
variables = 5
cardinality = 26
order = 1

[train]
batch_size = 100
max_iterations = 10
seed = 7

[data]
train_samples = 256
val_samples = 0
test_samples = 0
seed = 7
)";

void report(const char* name, double serial, double parallel, bool identical) {
  std::printf("%-18s serial %9.1f ms   parallel %9.1f ms   speedup %.2fx   %s\n", name,
              serial, parallel, parallel > 0 ? serial / parallel : 0.0,
              identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP: max %d threads", omp_get_max_threads());
  if (int cap = env_thread_cap()) std::printf(" (DEEPSTRUCT_THREADS=%d)", cap);
  std::printf("\n");
#else
  std::printf("built without OpenMP; both columns run the serial path\n");
#endif

  ConfigDoc doc = parse_config(kSpec);
  bool all_ok = true;

  Dataset ds_serial, ds_parallel;
  double t_gen_s = ms([&] {
    ds_serial = generate_split(doc.data, doc.data.train_samples, 42, ExecMode::Serial);
  });
  double t_gen_p = ms([&] {
    ds_parallel =
        generate_split(doc.data, doc.data.train_samples, 42, ExecMode::Parallel);
  });
  bool gen_ok = ds_serial == ds_parallel;
  all_ok &= gen_ok;
  report("data generation", t_gen_s, t_gen_p, gen_ok);

  Model m_serial = build_model(doc);
  m_serial.params.init_params(doc.train.seed);
  Model m_parallel = build_model(doc);
  m_parallel.params.init_params(doc.train.seed);

  double t_train_s =
      ms([&] { train(m_serial, ds_serial, nullptr, doc.train, {}, ExecMode::Serial); });
  double t_train_p = ms(
      [&] { train(m_parallel, ds_serial, nullptr, doc.train, {}, ExecMode::Parallel); });
  bool train_ok = params_crc(m_serial.params) == params_crc(m_parallel.params);
  all_ok &= train_ok;
  report("training (10 it)", t_train_s, t_train_p, train_ok);

  EvalMetrics e_serial, e_parallel;
  double t_eval_s = ms([&] { e_serial = evaluate(m_serial, ds_serial, ExecMode::Serial); });
  double t_eval_p =
      ms([&] { e_parallel = evaluate(m_serial, ds_serial, ExecMode::Parallel); });
  bool eval_ok = e_serial.char_acc == e_parallel.char_acc &&
                 e_serial.word_acc == e_parallel.word_acc;
  all_ok &= eval_ok;
  report("evaluation", t_eval_s, t_eval_p, eval_ok);

  if (!all_ok) {
    std::fprintf(stderr, "serial and parallel kernels disagree\n");
    return 1;
  }
  return 0;
}
