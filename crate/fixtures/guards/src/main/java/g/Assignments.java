package g;

public class Assignments {

    public void doubled(int a) {
        int t = a * 2;
        if (t > 10) {
            throw new IllegalStateException("too large");
        }
    }

    public void summed(int a, int b) {
        int t = a;
        t += b;
        if (t == 0) {
            throw new ArithmeticException("zero");
        }
    }
}
