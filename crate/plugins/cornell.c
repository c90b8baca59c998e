#include <stdint.h>

/* V(r) = a/r + k r with a = 0.1, k = 0.5, evaluated element-wise. The
 * host overrides both lengths to the batch size before each call. */
void cornell(double *v, const double *r, const int32_t *len)
{
    for (int32_t i = 0; i < *len; i++)
        v[i] = 0.1 / r[i] + 0.5 * r[i];
}
