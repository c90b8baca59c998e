#include <math.h>
#include <stdint.h>

/* Outputs come first, then inputs; each argument is a flat array. */

void fun(int32_t *out, const int32_t *in)
{
    (void)in;
    *out = 42;
}

void fun2(int32_t *out0, float *out1, const int32_t *in0, const float *in1)
{
    out0[0] = 42 * in0[0];
    out1[0] = in1[0] * in1[1];
    out1[1] = powf(in1[0], in1[1]);
}
