/* cc -Icrates/ffi/include crates/ffi/examples/solve.c target/release/libtdoa_ffi.a -lm -lpthread -ldl */
#include <stdio.h>
#include "tdoa.h"

int main(void) {
    const double coords[] = {3, 4, 0, -2, -2, 1, -1, 0, 0, 0, -16.0 / 7, 2.0 / 3, 0, 76.0 / 21, 0};
    const double times[] = {5, 3, 1, 50.0 / 21, 76.0 / 21};
    TdoaSensorArray *array = NULL;
    TdoaSolveResult *result = NULL;
    size_t rank, count, i;
    TdoaSolvePath path;

    if (tdoa_sensor_array_new(3, 5, coords, &array) != TDOA_STATUS_OK ||
        tdoa_solve(array, times, 5, 0.0, &result) != TDOA_STATUS_OK) {
        fprintf(stderr, "error: %s\n", tdoa_last_error());
        tdoa_sensor_array_free(array);
        return 1;
    }
    tdoa_solve_result_info(result, &path, &rank, &count);
    printf("tdoa %s: rank %zu, %zu candidates\n", tdoa_version(), rank, count);
    for (i = 0; i < count; i++) {
        double t, x[3];
        int spurious;
        tdoa_solve_result_candidate(result, i, &t, x, &spurious);
        printf("t = %g  x = (%g, %g, %g)%s\n", t, x[0], x[1], x[2], spurious ? "  spurious" : "");
    }
    tdoa_solve_result_free(result);
    tdoa_sensor_array_free(array);
    return 0;
}
